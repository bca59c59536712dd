use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration key failed validation.
    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    /// The requested operation is not available for this discount family.
    #[error("unsupported discount family: {0}")]
    UnsupportedFamily(String),

    /// A numerical routine produced an unusable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Simulated log-price left the representable range.
    #[error("path overflow: |log S| = {value:.3e} exceeds {limit} (path {path}, step {step})")]
    PathOverflow {
        value: f64,
        limit: f64,
        path: usize,
        step: usize,
    },

    /// Wealth hit zero or became non-finite along a simulated path.
    #[error("wealth left (0, inf) on path {path} at t = {t:.6}")]
    Wealth { path: usize, t: f64 },

    /// The tridiagonal system could not be solved.
    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    /// A required input artifact is missing.
    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

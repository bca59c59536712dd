//! TOML run configuration, validation and the two shipped presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discounting::{DiscountSpec, DiscountTable};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridSpace};
use crate::market::{MarketSpec, Preferences};
use crate::model::Model;
use crate::qsolver::SolverSettings;
use crate::simulate::{Quadrature, SimSettings};
use crate::valuepde::FdParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon `T`.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub discount: DiscountConfig,
    pub market: MarketConfig,
    pub prefs: PrefsConfig,
    pub solver: SolverConfig,
    pub sim: SimSettings,
    pub fd: FdConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountConfig {
    Exponential {
        rho: f64,
    },
    GeneralizedHyperbolic {
        a: f64,
        b: f64,
        rho: f64,
    },
    /// CSV with columns `x,H`; relative paths resolve against the config file.
    Tabulated {
        table_path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketConfig {
    Constant {
        r: f64,
        const_sigma: f64,
        const_theta: f64,
    },
    ClampedCev {
        r: f64,
        sigma0: f64,
        #[serde(rename = "S0_ref")]
        s0_ref: f64,
        beta: f64,
        theta_mult: f64,
        sigma_min: f64,
        sigma_max: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefsConfig {
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of uniform time nodes on `[0, T]`.
    pub t_nodes: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
    #[serde(default)]
    pub grid_space: GridSpace,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default = "yes")]
    pub freeze_noise: bool,
    #[serde(default = "default_se_cap")]
    pub se_cap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub n_t_fd: usize,
    pub n_y_fd: usize,
    /// Log-price extent of the PDE grid; defaults to the solver extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<f64>,
    #[serde(default = "one")]
    pub rannacher_steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    QRange,
    PiSurface,
    ConsumptionQuotient,
    #[default]
    FullPipeline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: ExperimentName,
    /// Initial price of the consumption-quotient paths.
    #[serde(rename = "S0", default = "ten")]
    pub s0: f64,
    #[serde(default = "unit")]
    pub x0: f64,
    /// Raw quotient paths written next to the quantile bands.
    #[serde(default)]
    pub emit_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: ExperimentName::default(),
            s0: ten(),
            x0: unit(),
            emit_paths: 0,
            output_dir: None,
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn ten() -> f64 {
    10.0
}
fn unit() -> f64 {
    1.0
}
fn default_se_cap() -> f64 {
    SolverSettings::default().se_cap
}

impl RunConfig {
    /// Parses TOML; validation errors are prefixed with the line of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate().map_err(|e| locate_key(e, text))?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative table paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.display().to_string()),
            _ => Error::io(path, e),
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if let DiscountConfig::Tabulated { table_path } = &mut cfg.discount {
            if table_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *table_path = dir.join(&*table_path);
                }
            }
        }
        cfg.validate().map_err(|e| locate_key(e, &text))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.q_grid()?;
        self.fd_grid()?;
        self.solver_settings().validate()?;
        self.sim.validate()?;
        let e = &self.experiment;
        if !(e.s0 > 0.0 && e.s0.is_finite()) {
            return Err(Error::config("S0", "must be positive"));
        }
        if !(e.x0 > 0.0 && e.x0.is_finite()) {
            return Err(Error::config("x0", "must be positive"));
        }
        Ok(())
    }

    pub fn discount_spec(&self) -> Result<DiscountSpec> {
        match &self.discount {
            DiscountConfig::Exponential { rho } => DiscountSpec::exponential(*rho),
            DiscountConfig::GeneralizedHyperbolic { a, b, rho } => DiscountSpec::generalized_hyperbolic(*a, *b, *rho),
            DiscountConfig::Tabulated { table_path } => {
                let table = DiscountTable::from_csv(table_path)?;
                if table.max_lag() < self.horizon {
                    return Err(Error::config(
                        "table_path",
                        format!("table covers lags up to {} < T = {}", table.max_lag(), self.horizon),
                    ));
                }
                Ok(DiscountSpec::Tabulated(table))
            }
        }
    }

    pub fn market_spec(&self) -> Result<MarketSpec> {
        match self.market {
            MarketConfig::Constant {
                r,
                const_sigma,
                const_theta,
            } => MarketSpec::constant(r, const_sigma, const_theta),
            MarketConfig::ClampedCev {
                r,
                sigma0,
                s0_ref,
                beta,
                theta_mult,
                sigma_min,
                sigma_max,
            } => MarketSpec::clamped_cev(r, sigma0, s0_ref, beta, theta_mult, sigma_min, sigma_max),
        }
    }

    pub fn model(&self) -> Result<Model> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("T", "must be positive"));
        }
        Ok(Model::new(
            self.discount_spec()?,
            self.market_spec()?,
            Preferences::new(self.prefs.gamma)?,
        ))
    }

    /// Grid of the rate field.
    pub fn q_grid(&self) -> Result<Grid2D> {
        let s = &self.solver;
        if s.n_y < 2 {
            return Err(Error::config("n_y", "need at least two spatial nodes"));
        }
        Grid2D::uniform(self.horizon, s.t_nodes, s.y_min, s.y_max, s.n_y, s.grid_space)
    }

    /// Grid of the value-function PDE, always uniform in log-price.
    pub fn fd_grid(&self) -> Result<Grid2D> {
        let f = &self.fd;
        if f.n_t_fd < 2 {
            return Err(Error::config("n_t_fd", "need at least two time nodes"));
        }
        if f.n_y_fd < 3 {
            return Err(Error::config("n_y_fd", "need at least three spatial nodes"));
        }
        let y_min = f.y_min.unwrap_or(self.solver.y_min);
        let y_max = f.y_max.unwrap_or(self.solver.y_max);
        Grid2D::uniform(self.horizon, f.n_t_fd, y_min, y_max, f.n_y_fd, GridSpace::Log)
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            freeze_noise: self.solver.freeze_noise,
            se_cap: self.solver.se_cap,
        }
    }

    pub fn fd_params(&self) -> FdParams {
        FdParams {
            rannacher_steps: self.fd.rannacher_steps,
        }
    }
}

/// Prefixes a config error with the line on which its key first appears.
fn locate_key(err: Error, text: &str) -> Error {
    let Error::Config { key, message } = err else {
        return err;
    };
    let line = text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key.as_str())
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    });
    match line {
        Some(n) => Error::Config {
            key,
            message: format!("line {}: {message}", n + 1),
        },
        None => Error::Config { key, message },
    }
}

fn common(discount: DiscountConfig, market: MarketConfig) -> RunConfig {
    let y0 = 10f64.ln();
    RunConfig {
        horizon: 10.0,
        discount,
        market,
        prefs: PrefsConfig { gamma: -5.0 },
        solver: SolverConfig {
            t_nodes: 41,
            y_min: y0 - 3.0,
            y_max: y0 + 3.0,
            n_y: 41,
            grid_space: GridSpace::Log,
            tol: 1e-4,
            max_iter: 30,
            freeze_noise: true,
            se_cap: default_se_cap(),
        },
        sim: SimSettings {
            n_paths: 50_000,
            n_steps_per_unit_time: 4.0,
            seed: 20_240_917,
            antithetic: true,
            quadrature: Quadrature::Trapezoid,
        },
        fd: FdConfig {
            n_t_fd: 401,
            n_y_fd: 241,
            y_min: Some(y0 - 4.0),
            y_max: Some(y0 + 4.0),
            rannacher_steps: 1,
        },
        experiment: ExperimentConfig::default(),
    }
}

fn hyperbolic() -> DiscountConfig {
    DiscountConfig::GeneralizedHyperbolic {
        a: 1.0,
        b: 0.02,
        rho: 0.02,
    }
}

/// Constant market `(r, σ, θ) = (0.05, 0.30, 0.2777)`, hyperbolic discounting.
pub fn preset_constant() -> RunConfig {
    common(
        hyperbolic(),
        MarketConfig::Constant {
            r: 0.05,
            const_sigma: 0.30,
            const_theta: 0.2777,
        },
    )
}

/// Clamped CEV market around `S0 = 10`, hyperbolic discounting.
pub fn preset_cev() -> RunConfig {
    common(
        hyperbolic(),
        MarketConfig::ClampedCev {
            r: 0.05,
            sigma0: 0.3,
            s0_ref: 10.0,
            beta: -0.4,
            theta_mult: 6.0,
            sigma_min: 0.15,
            sigma_max: 0.45,
        },
    )
}

/// Looks up a preset by name (`constant` or `cev`).
pub fn preset(name: &str) -> Result<RunConfig> {
    match name {
        "constant" | "preset_constant" => Ok(preset_constant()),
        "cev" | "preset_cev" => Ok(preset_cev()),
        other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
    }
}

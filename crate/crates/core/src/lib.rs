// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cli;
pub mod config;
pub mod discounting;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod market;
pub mod model;
pub mod qsolver;
pub mod simulate;
pub mod valuepde;
pub mod wealth;

pub use error::{Error, Result};
pub use model::Model;

//! Numerics for degenerate Kolmogorov operators.

pub mod error;
pub mod finance;
pub mod fundsol;
pub mod grid;
pub mod group;
pub mod kfp;
pub mod nonlocal;
pub mod quad;
pub mod stochastic;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

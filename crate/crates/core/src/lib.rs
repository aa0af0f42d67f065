//! Quenched spectral analysis of the Brox diffusion killed at the ends of an
//! interval, together with independent cross-checks: a tridiagonal matrix
//! oracle, a Riccati explosion counter and a Monte Carlo path simulator.

pub mod cli;
pub mod density;
pub mod eigen;
pub mod env;
pub mod error;
pub mod green;
pub mod mc;
pub mod operator;
pub mod oracle;
pub mod riccati;
pub mod shooting;

pub use env::{sample_environment, Environment, GridFunction, Sign};
pub use error::{Error, Result};

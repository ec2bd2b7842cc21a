//! Quasi-stationary distributions of one-dimensional diffusions on natural
//! scale, absorbed at the lower end of their state interval.
//!
//! A diffusion is given by its [`SpeedMeasure`](measure::SpeedMeasure):
//! a density plus finitely many atoms. From it the crate computes boundary
//! classifications, sufficient criteria for uniform exponential convergence
//! to the QSD, the QSD itself on a grid, and Monte Carlo estimates used to
//! cross-check the deterministic answers.

pub mod analysis;
pub mod cli;
pub mod criteria;
pub mod error;
pub mod expr;
pub mod measure;
pub mod quadrature;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};

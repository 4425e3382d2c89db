//! Batch workbench over the `sdarb` library: builds, solves, backtests and
//! diagnoses monthly layover problems and verifies the solver against the
//! exact dominance checks.

pub mod backtest;
pub mod build;
pub mod config;
pub mod diagnose;
pub mod error;
pub mod io;
pub mod mps_solve;
pub mod solve;
pub mod verify;

pub use config::{GridSpec, RunConfig};
pub use error::CliError;

//! Batch runner for gait-search and learning experiments: grid sweeps,
//! Bayesian-optimization trials, policy training and evaluation, and the
//! comparison report with its charts.

pub mod charts;
pub mod cli;
pub mod compare;
pub mod config;
pub mod error;
pub mod fsio;
pub mod manifest;
pub mod records;
pub mod run;
pub mod table;

pub use config::{ExperimentConfig, Kind};
pub use error::{RunError, RunResult};
pub use manifest::RunManifest;
pub use run::run;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
/// The run finished but some evaluations diverged, and nothing else failed.
pub const EXIT_DIVERGED: u8 = 3;

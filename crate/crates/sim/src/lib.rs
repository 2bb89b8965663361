//! Configuration, Monte Carlo orchestration, result files and plots for the
//! robust NOMA/SWIPT designs in `swipt-core`.

pub mod cli;
pub mod complexity;
pub mod config;
pub mod plot;
pub mod results;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, Model, Objective, Scheme};
pub use runner::{run_experiment, run_sweep, Status, TrialRecord};

//! Experiment runner for `fedwsm`: config parsing, the `run`, `sweep`,
//! `compare` and `partition-stats` commands, and their on-disk artifacts.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

//! Experiment orchestration for shflab: strict TOML configs, the named experiments, CSV and JSON
//! output, and the `shflab` command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod record;

pub use config::{validate_config, ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiments::{compute_experiment, run_experiment};
pub use record::{Check, ResultRecord, Row};

//! Experiment runner: binds TOML configs to the sectlab-core modules and
//! writes report.json plus CSV tables.

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, validate_config, ConfigIssue, Experiment, ExperimentConfig, Params};
pub use run::{resolve_output_dir, run_experiment, Check, RunReport};

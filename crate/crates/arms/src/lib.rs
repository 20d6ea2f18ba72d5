//! Experiment runner for the `arms-core` engine: spec files, presets,
//! replicate pools, trace and summary outputs.

pub mod config;
pub mod oracle;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::{validate_config, ExperimentSpec, Validation};
pub use runner::{execute, run_experiment, workers_from_env};

//! Experiment configurations and report pipelines for the stealthy-attack
//! benchmark CLI. The library surface exists so integration tests can drive
//! the same code paths as the binary.

pub mod config;
pub mod experiments;

pub use config::{parse_config, ExperimentConfig, Manifest};
pub use experiments::{run_experiment, InventoryWorkbench};

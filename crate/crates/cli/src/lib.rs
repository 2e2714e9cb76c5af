//! Experiment runner for the spike-and-slab sparse coding library.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;

pub use config::{derive_seed, Engine, Experiment, ExperimentConfig, Stream};
pub use error::{CliError, CliResult};
pub use experiments::{run_experiment, RunOutcome};
pub use manifest::RunManifest;

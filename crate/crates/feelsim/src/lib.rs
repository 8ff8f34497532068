//! Experiment harness for federated edge learning over noisy channels:
//! configuration files, single runs, sweeps and their artifacts.

pub mod config;
pub mod constants;
pub mod error;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{ConfigError, HarnessError};

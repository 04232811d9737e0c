//! Configuration, experiment drivers and CSV reports for `mgrit`.

pub mod config;
pub mod drivers;
pub mod report;

pub use config::{ConfigError, ExperimentConfig};

//! Command-line front end for the tandem-queue overflow estimators: config
//! files and presets, seeded parallel benchmarks, result and model files.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_io;
pub mod output;
pub mod runner;
pub mod seeds;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

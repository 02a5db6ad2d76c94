//! Batch pipeline around the flow model: data generation, training,
//! transfer, evaluation and reporting, each leaving a manifest that pins its
//! inputs, configuration and outputs.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use config::PipelineConfig;
pub use error::{CliError, Result};

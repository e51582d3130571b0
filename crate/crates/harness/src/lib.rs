//! Experiment orchestration for `marqoe-core`: configuration, dataset
//! import, the `marqoe` CLI and plot-ready outputs.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod import;
pub mod manifest;
pub mod studies;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig};

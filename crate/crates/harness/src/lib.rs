//! Command-line harness: configuration, experiment presets, CSV/JSON
//! output and SVG plots.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use commands::{execute, Report};
pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};

//! Experiment driver for the `mwdk` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{tuned_h, RunConfig, CANONICAL_SEED};
pub use error::{CliError, Result};

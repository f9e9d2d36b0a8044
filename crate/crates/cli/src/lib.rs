//! File formats, experiment configuration, and subcommands behind the
//! `photoloss` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

//! Command-line driver: configuration parsing, run dispatch and output files.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli};
pub use config::{parse_config, ConfigError, RunConfig};

//! Command-line front end: configuration, subcommands and result files.

pub mod commands;
pub mod config;
pub mod layout_io;

pub use commands::{CliError, CliResult};
pub use config::ConfigFile;

//! Experiment harness for opacity-maximizing policy synthesis: TOML
//! configs, CSV/JSON outputs and the self-check subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod mdp_doc;
pub mod output;

pub use commands::RunOptions;
pub use error::{exit, CliError, CliResult};

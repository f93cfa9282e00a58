//! Command-line front end: layered settings, run manifests, experiment
//! commands and the synthetic toy corpus.

pub mod cli;
pub mod commands;
pub mod error;
pub mod settings;
pub mod toy_data;

pub use cli::run_cli;
pub use error::{exit, CliError, CliResult};

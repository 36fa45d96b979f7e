//! Command-line companion to `lunar-descent-core`: configuration files,
//! CSV/JSON artifacts, run manifests and the subcommands.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;

pub use cli::run;
pub use error::CliError;

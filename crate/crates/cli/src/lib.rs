//! Command-line front end: argument parsing, file formats and the
//! `simulate`, `discover`, `orient`, `knv` and `benchmark` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};

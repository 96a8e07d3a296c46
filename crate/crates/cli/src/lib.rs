//! Command-line front end for the `lambda-landscape` library: experiment
//! configuration, figure recipes and CSV/JSON output.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 objective not
//! reached (or a verification check failed).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::path::PathBuf;

pub use commands::{run_cli, Cli};

pub const EXIT_SUCCESS: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NOT_REACHED: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lambda_landscape::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

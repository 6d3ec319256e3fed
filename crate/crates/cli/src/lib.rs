//! Command implementations and the sweep harness behind the `hetfair` binary.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod sweep;

use thiserror::Error;

/// Errors surfaced by commands. Config problems exit with 1, everything else
/// with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
    /// The command finished but recorded failed runs.
    #[error("{0} run(s) failed; see the manifest for details")]
    RunsFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::RunsFailed(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

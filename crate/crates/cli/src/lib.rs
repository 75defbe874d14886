//! Library surface of the `duet` command-line tool. The binary in
//! `main.rs` is a thin wrapper; tests drive the same code paths directly.

pub mod commands;
pub mod manifest;
pub mod spec;

/// Validation problems (bad flags, missing/mismatched inputs) exit with 2;
/// runtime failures exit with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

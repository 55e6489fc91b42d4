//! Library side of the `fedminmax` command-line tool.
//!
//! The binary is a thin wrapper over [`config`] (experiment files and flag
//! overrides) and [`runner`] (data preparation, training, reports), so
//! integration tests can drive the exact same pipeline in process.

pub mod config;
pub mod runner;

use std::fmt;

/// CLI failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 1).
    Validation(String),
    /// Failure while running: I/O trouble or numeric divergence (exit 2).
    Runtime(String),
}

impl CliError {
    /// Process exit code the failure maps to.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fedminmax::Error> for CliError {
    fn from(e: fedminmax::Error) -> Self {
        match &e {
            fedminmax::Error::Numeric(_) | fedminmax::Error::Io { .. } => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

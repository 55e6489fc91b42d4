//! Error and result types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset handling, training and reporting.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition
    /// (mismatched shapes, empty inputs, out-of-range hyperparameters...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A data file does not match the expected schema (missing columns,
    /// unparsable cells, unknown category values...).
    #[error("schema error: {0}")]
    Schema(String),

    /// Training produced a non-finite value; the message carries enough
    /// context (round, client, quantity) to locate the divergence.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// File-system access failed for the named path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A stored artifact (dataset snapshot, report) could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Convenience constructor for [`Error::InvalidArgument`].
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Convenience constructor for [`Error::Io`] with path context.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

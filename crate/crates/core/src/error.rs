use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Variants are grouped so a driver can map them onto process exit codes:
/// configuration problems, bad data, numeric failure during training, and IO.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two objects that must agree in shape do not.
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An index (class, learner, sample) is out of range.
    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// Input data violates a dataset invariant.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A row of an input file could not be parsed.
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at iteration {iteration} (learning rate {learning_rate:e}): {detail}")]
    Divergence {
        iteration: usize,
        learning_rate: f64,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Config,
            Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::InvalidData(_)
            | Error::Parse { .. }
            | Error::Json(_) => ErrorKind::Data,
            Error::Divergence { .. } => ErrorKind::Numeric,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: line {line}: {message}")]
    Validation {
        path: String,
        line: usize,
        message: String,
    },

    #[error("frequency {frequency} Hz is outside the tabulated range [{min}, {max}] Hz")]
    OutOfRange { frequency: f64, min: f64, max: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("target {target} dB is not attainable; reachable range is [{min}, {max}] dB")]
    Infeasible { target: f64, min: f64, max: f64 },

    #[error("no finite optimum: {0}")]
    NoFiniteOptimum(String),

    #[error("non-finite value at {frequency} Hz in {what}")]
    NonFinite { what: String, frequency: f64 },

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the numbers rather than by the inputs'
    /// shape or validity.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}

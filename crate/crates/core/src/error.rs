use std::path::PathBuf;

use crate::phase::EstimationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The likelihood vanished on every grid point, so no posterior exists.
    #[error("degenerate update: likelihood vanishes on the whole support")]
    DegenerateUpdate,

    #[error("estimation did not reach its stopping rule within {iterations} iterations")]
    Timeout {
        iterations: usize,
        partial: Box<EstimationTrace>,
    },

    #[error("dimension mismatch: expected {expected} qubits, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

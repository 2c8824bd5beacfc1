use std::path::PathBuf;

use crate::identifiability::ExcitationReport;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no consensus: best inlier fraction {fraction:.3} below threshold {threshold:.3}")]
    NoConsensus { fraction: f64, threshold: f64 },

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("unidentifiable: {reason}")]
    Unidentifiable {
        reason: String,
        excitation: Option<Box<ExcitationReport>>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

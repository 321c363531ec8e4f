use std::path::PathBuf;

use crate::solver::AscentTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("{what} is not positive definite (ridge {ridge:e})")]
    Singular { what: &'static str, ridge: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("precondition failed: {check} = {value:e} exceeds tolerance {tolerance:e}")]
    PreconditionFailed {
        check: &'static str,
        value: f64,
        tolerance: f64,
    },

    #[error("gradient ascent did not converge after {} iterations", trace.iterates.len().saturating_sub(1))]
    MaxItersExceeded { trace: Box<AscentTrace> },

    #[error("detection map has zero variance")]
    ZeroVariance,

    #[error("ground-truth mask needs both target and background pixels")]
    DegenerateMask,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("bad magic: expected \"TDRS1\"")]
    BadMagic,

    #[error("malformed scene header: {0}")]
    BadHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("payload has {extra} trailing bytes")]
    TrailingBytes { extra: u64 },

    #[error("scene dimensions overflow the addressable payload size")]
    DimensionOverflow,

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

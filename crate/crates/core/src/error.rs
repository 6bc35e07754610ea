use std::path::PathBuf;

/// Errors raised by the forensics toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("zero-area image")]
    ZeroArea,

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("bad magic")]
    BadMagic,

    #[error("size mismatch: header declares {expected} bytes of payload, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("plane too small: {width}x{height} cannot be decomposed to {levels} levels")]
    PlaneTooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unreachable target: PSNR stays infinite for every probed strength")]
    UnreachableTarget,

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

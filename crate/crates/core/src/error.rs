use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("transmit stream must contain at least one frame")]
    EmptyStream,

    #[error("length mismatch: {what} has {actual} samples, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        actual: usize,
        expected: usize,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("need at least {needed} frames, got {actual}")]
    InsufficientFrames { needed: usize, actual: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file: header promises {expected} bytes, {actual} present")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: {extra} bytes after payload")]
    TrailingData { extra: u64 },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("unknown label: {0}")]
    UnknownLabel(String),

    #[error("numeric failure in {location}: non-finite value")]
    NumericFailure { location: String },

    #[error("normalization statistics have not been fitted")]
    UnfittedStats,

    #[error("evaluation protocol violated: {0}")]
    Protocol(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

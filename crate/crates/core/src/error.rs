//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported format: {0}")]
    FormatUnsupported(String),

    #[error("column index {index} out of range (width {width})")]
    IndexOutOfRange { index: usize, width: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt length: expected {expected} bytes, found {found}")]
    CorruptLength { expected: u64, found: u64 },

    #[error("missing tensor {0}")]
    MissingTensor(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty trace")]
    EmptyTrace,

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("empty reference sequence")]
    EmptyReference,
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

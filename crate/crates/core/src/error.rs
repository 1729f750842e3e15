use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("input too short: need at least {needed} samples along the convolved axis, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate reference: signal has no energy after mean removal")]
    DegenerateReference,

    #[error("degenerate signal: {0} has zero energy")]
    DegenerateSignal(&'static str),

    #[error("insufficient signal: {frames} non-silent frames, need at least {needed}")]
    InsufficientSignal { frames: usize, needed: usize },

    #[error("unsupported format: {field} = {value}")]
    UnsupportedFormat { field: &'static str, value: String },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: schema error: {message}")]
    Schema { line: usize, message: String },

    #[error("non-finite value at step {step}: {message}")]
    NonFinite { step: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Errors caused by input files (missing, unreadable, malformed).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::UnsupportedFormat { .. }
                | Error::CorruptFile(_)
                | Error::CorruptCheckpoint(_)
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::EmptyDataset
        )
    }
}

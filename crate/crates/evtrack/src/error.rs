use std::path::PathBuf;

use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("event stream not sorted by timestamp: event {index} has t={next} after t={prev}")]
    UnsortedEvents { index: usize, prev: u64, next: u64 },

    #[error("invalid time interval [{t_start}, {t_end})")]
    InvalidInterval { t_start: u64, t_end: u64 },

    #[error("event window has zero duration, cannot normalize timestamps")]
    ZeroDurationWindow,

    #[error("initialization window contains no events")]
    EmptyInitialization,

    #[error("{context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{context}: input extent {actual} is below the minimum {min}")]
    InputTooSmall {
        context: &'static str,
        actual: usize,
        min: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("numerical check failed: {0}")]
    NumericalCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

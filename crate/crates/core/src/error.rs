use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::classifier::TrainHistory;
use crate::model::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A session file line could not be parsed. Line numbers are 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("channel {channel}: {source}")]
    Channel {
        channel: Channel,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("class {label:?} has {count} samples, at least 3 are required to split")]
    ClassTooSmall { label: String, count: usize },

    #[error("training diverged at iteration {iteration}: non-finite loss")]
    Diverged {
        iteration: usize,
        history: Box<TrainHistory>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than by the environment or
    /// by a numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Invalid(_)
            | Error::Dimension { .. }
            | Error::UnknownLabel(_)
            | Error::ClassTooSmall { .. }
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Channel { source, .. } => source.is_validation(),
            Error::Diverged { .. } | Error::Io { .. } => false,
        }
    }
}

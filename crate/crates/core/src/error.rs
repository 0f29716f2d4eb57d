use std::path::PathBuf;

use thiserror::Error;

use crate::features::wire::TransportError;
use crate::tracker::BoundingBox;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error(transparent)]
    Transport(#[from] TransportError),

    #[error("{path}:{line}: {kind}")]
    Parse {
        path: PathBuf,
        line: usize,
        kind: ParseErrorKind,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("config: {0}")]
    Config(String),

    /// A tracker step failed mid-sequence; the boxes produced so far are kept.
    #[error("tracking failed at frame {frame}: {source}")]
    Tracking {
        frame: usize,
        trajectory: Vec<BoundingBox>,
        #[source]
        source: Box<Error>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("missing file")]
    MissingFile,
    #[error("non-numeric field `{0}`")]
    NonNumeric(String),
    #[error("expected 4 fields, found {0}")]
    WrongArity(usize),
    #[error("{ground_truth} ground-truth lines for {frames} frames")]
    CountMismatch { ground_truth: usize, frames: usize },
    #[error("no frames found")]
    NoFrames,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

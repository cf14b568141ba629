use std::path::PathBuf;

use crate::alignment::MergeRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message} (token `{token}`)")]
    Parse {
        line: usize,
        token: String,
        message: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("non-finite coordinate in point {index}")]
    NonFinite { index: usize },

    #[error("histograms have mismatched support: {0}")]
    MismatchedSupport(String),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("need at least {needed} representative points, got {got}")]
    TooFewReps { needed: usize, got: usize },

    #[error("{kind} takes {expected} points, got {got}")]
    WrongArity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("insufficient training data: need at least {needed} images, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate correspondences: all matched source points coincide")]
    DegenerateCorrespondence,

    #[error("group alignment aborted after {} merges: {source}", merges.len())]
    AlignmentAborted {
        merges: Vec<MergeRecord>,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or usage, as opposed to a numerical
    /// failure inside an algorithm.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::DegenerateCorrespondence | Error::TooFewReps { .. } => false,
            Error::AlignmentAborted { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}

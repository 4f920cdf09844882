use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: malformed JSON: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed manifest at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate utterance_id `{0}`")]
    DuplicateUtterance(String),

    #[error("row {row} has zero norm and cannot be L2-normalized")]
    ZeroNorm { row: usize },

    #[error("speaker `{speaker}` has a zero-norm embedding centroid")]
    ZeroCentroid { speaker: String },

    #[error("node {node} is isolated (all affinities underflowed to zero at sigma = {sigma}); try a larger sigma")]
    IsolatedNode { node: usize, sigma: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value produced at propagation iteration {iteration}")]
    Numeric { iteration: usize },

    #[error("linear system is singular or ill-conditioned (residual {residual:e})")]
    Singular { residual: f64 },

    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),

    #[error("insufficient data: {0}")]
    Shortfall(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

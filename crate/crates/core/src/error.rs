use std::path::PathBuf;

use thiserror::Error;

use crate::graph::Edge;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("perturbation conflict: {0}")]
    PerturbationConflict(String),

    #[error("degenerate degree sample: {0}")]
    DegenerateDegreeSample(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite loss at epoch {epoch}: {context}")]
    NonFiniteLoss { epoch: usize, context: String },

    #[error("non-finite gradient at edge index {index} ({edge:?})")]
    NonFiniteGradient { index: usize, edge: Edge },

    #[error("edge set is not a subset of the candidate edges: {0:?} missing")]
    NotSubset(Edge),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "candidate space too large for exhaustive search ({count} > {limit}); \
         restrict to the computation subgraph"
    )]
    CandidateSpaceTooLarge { count: usize, limit: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::cam::CamError;
use crate::evaluate::EvalError;
use crate::selection::SelectionError;
use crate::similarity::SimilarityError;
use crate::tensorio::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Cam(#[from] CamError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "tensor",
            Error::Similarity(_) => "similarity",
            Error::Selection(_) => "selection",
            Error::Cam(_) => "cam",
            Error::Eval(_) => "evaluate",
            Error::Config(_) => "config",
            Error::Scenario(_) => "scenario",
            Error::Json { .. } => "json",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

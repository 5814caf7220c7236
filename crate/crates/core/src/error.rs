use std::path::PathBuf;

use thiserror::Error;

use crate::ndiff::NdError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("scenario parse error at row {row}, column `{column}`: {reason}")]
    ScenarioParse {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("scenario header mismatch: expected `{expected}`, found `{found}`")]
    ScenarioHeader { expected: String, found: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible generator target: {0}")]
    InfeasibleTarget(String),

    #[error("episode already finished at t = {t} (horizon {horizon})")]
    EpisodeFinished { t: usize, horizon: usize },

    #[error("both replay buffers are empty")]
    EmptyBuffers,

    #[error("horizon too large for exhaustive search: {sequences} sequences (limit {limit})")]
    HorizonTooLarge { sequences: f64, limit: usize },

    #[error("malformed metrics file {path}: {reason}")]
    Metrics { path: PathBuf, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Numeric(#[from] NdError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

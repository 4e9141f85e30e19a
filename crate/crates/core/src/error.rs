use std::path::PathBuf;

use thiserror::Error;

use crate::simulator::StreamConfig;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid stream configuration {config}: {reason}")]
    InvalidConfig { config: StreamConfig, reason: String },

    #[error("invalid configuration grid: {0}")]
    InvalidGrid(String),

    #[error("invalid workload `{id}`: {reason}")]
    InvalidWorkload { id: String, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("solver did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("unknown label {0}")]
    UnknownLabel(usize),

    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

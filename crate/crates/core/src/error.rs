use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value is outside the domain of the named parameter or operation.
    #[error("domain error ({name}): {message}")]
    Domain { name: String, message: String },

    #[error("reward weights are all zero; explicit scaling is undefined")]
    DegenerateWeights,

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("evaluation failed: {0}")]
    EvaluationFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("journal integrity error at {path}:{line}: {message}")]
    Integrity {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("journal {path} was written for config {found}, current config is {expected}")]
    ConfigMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("optimization seed {0} has no incumbent")]
    MissingIncumbent(usize),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Domain {
            name: name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }
}

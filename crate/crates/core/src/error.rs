use std::path::PathBuf;

use numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate row {index} ({word:?}): {reason}")]
    DegenerateRow {
        index: usize,
        word: String,
        reason: &'static str,
    },

    #[error("degenerate column {index}: zero variance")]
    DegenerateColumn { index: usize },

    #[error("cannot apply {requested} to a matrix already tagged {current}")]
    Strategy { current: String, requested: String },

    #[error("inconsistent domain data: {0}")]
    Consistency(String),

    #[error("domain {0:?} has no examples")]
    EmptyDomain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("naming conflict: {0}")]
    Naming(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("unpaired runs: {}", .0.join(", "))]
    Pairing(Vec<String>),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

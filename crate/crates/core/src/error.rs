use std::path::PathBuf;

use thiserror::Error;

use crate::interval::Interval;

pub type Result<T, E = TilpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TilpError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("interval {0} has an unresolved endpoint; impute it before comparing")]
    UnresolvedInterval(Interval),

    #[error("invalid split boundaries: {first} must be strictly less than {second}")]
    InvalidBoundary { first: i32, second: i32 },

    #[error("missing pairwise temporal constraint for body positions ({0}, {1})")]
    MissingPairConstraint(usize, usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TilpError {
    /// Process exit code used by the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            TilpError::Parse { .. } | TilpError::Json(_) | TilpError::Config(_) => 2,
            TilpError::UnresolvedInterval(_)
            | TilpError::InvalidBoundary { .. }
            | TilpError::MissingPairConstraint(..)
            | TilpError::Contract(_) => 3,
            TilpError::Divergence { .. } => 4,
            TilpError::Io(_) => 1,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdiError {
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {0} has no training samples")]
    MissingClass(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {what}")]
    Diverged {
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error("system {system} does not cover {} utterance(s): {}", missing.len(), missing.join(", "))]
    Coverage { system: String, missing: Vec<String> },

    #[error("model format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, AdiError>;

impl AdiError {
    pub(crate) fn parse(source_name: &str, line: usize, msg: impl Into<String>) -> Self {
        AdiError::Parse {
            source_name: source_name.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AdiError::InvalidInput(msg.into())
    }
}

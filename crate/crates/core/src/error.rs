use thiserror::Error;

/// Errors surfaced by every layer of the library.
#[derive(Debug, Error)]
pub enum VieError {
    /// A caller broke an operation's precondition (shapes, ranges, sizes).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value fell outside the mathematical domain of an operation,
    /// or an operation produced a non-finite value.
    #[error("domain error: {0}")]
    Domain(String),

    /// Training produced a non-finite quantity; `component` names the culprit.
    #[error("training failure in {component}: {message}")]
    Training { component: String, message: String },

    /// Feature dimension or schema disagreement between a model and data.
    #[error("data/model mismatch: {0}")]
    Mismatch(String),

    /// Malformed text input (checkpoint, CSV, config).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VieError>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(VieError::Contract(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(VieError::Domain(msg.into()))
}

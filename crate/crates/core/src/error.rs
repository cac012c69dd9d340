use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported preference kind: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("insufficient structure: {0}")]
    InsufficientStructure(String),
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn domain(msg: impl Into<String>) -> ModelError {
    ModelError::Domain(msg.into())
}

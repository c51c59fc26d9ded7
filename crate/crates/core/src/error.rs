use thiserror::Error;

/// Invalid parameters or parameter combinations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{0}")]
    Combination(String),
    #[error("config file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// Errors raised by the dense-network energy model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected} rings, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

use thiserror::Error;

/// Validation error for a problem instance, pointing at the offending
/// field with a path into the configuration tree (e.g.
/// `price_chain.transition[2]`).
#[derive(Debug, Clone, Error)]
#[error("{path}: {message}")]
pub struct ModelError {
    pub path: String,
    pub message: String,
}

impl ModelError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

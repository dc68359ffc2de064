use thiserror::Error;

/// A parameter or configuration value that violates a documented invariant.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// A state component became NaN or infinite during integration.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("integration diverged at t = {t}: `{field}` is no longer finite")]
pub struct DivergenceError {
    pub t: f64,
    pub field: &'static str,
}

/// Failure of a simulation: bad inputs or a numerical blow-up.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MisfitError {
    /// An argument lies outside the domain of the operation.
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    /// A numerical routine did not reach its accuracy target.
    #[error("numerical failure: {reason} (last residual {residual:e})")]
    NumericalFailure { reason: String, residual: f64 },

    /// A configuration file could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MisfitError>;

impl MisfitError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        MisfitError::InvalidArgument { field: field.into(), reason: reason.into() }
    }

    pub fn numerical(reason: impl Into<String>, residual: f64) -> Self {
        MisfitError::NumericalFailure { reason: reason.into(), residual }
    }
}

impl From<std::io::Error> for MisfitError {
    fn from(e: std::io::Error) -> Self {
        MisfitError::Io(e.to_string())
    }
}

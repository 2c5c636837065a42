use thiserror::Error;

/// Errors raised by the engine.
///
/// Diagnostics that are part of normal output (feasibility reports, Pareto
/// scans, audits) are returned as values, not through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("grid of {size} points exceeds budget {budget}; lower the resolution")]
    GridBudget { size: u128, budget: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unsupported profile: {0}")]
    UnsupportedProfile(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

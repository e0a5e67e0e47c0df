use thiserror::Error;

/// Errors raised by the numerical layer.
///
/// Every variant maps onto a stable machine-readable [`Error::category`] so
/// callers (the CLI in particular) can tell malformed input apart from a
/// violated mathematical inequality.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{context}: eigenvalue {eigenvalue:e} is outside the domain")]
    Domain { context: String, eigenvalue: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("inequality violated: {0}")]
    InequalityViolation(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Domain { .. } => "domain",
            Error::Range(_) => "range",
            Error::Precondition(_) => "precondition",
            Error::Construction(_) => "construction",
            Error::InequalityViolation(_) => "inequality_violation",
        }
    }

    /// True when the error signals a broken inequality rather than bad input.
    pub fn is_inequality_violation(&self) -> bool {
        matches!(self, Error::InequalityViolation(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

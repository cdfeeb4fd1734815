use thiserror::Error;

/// Errors raised by the solver modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("no series solution for p = {p}: order {order} is incompatible (residual {residual:e})")]
    NoSeriesSolution { p: i32, order: usize, residual: f64 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("alpha is imaginary at r = {witness_r}: 1 - r^2 phi' = {alpha_sq:e}")]
    AlphaImaginary { witness_r: f64, alpha_sq: f64 },

    #[error("operation requires a finite-action solution, got {0}")]
    NotFiniteAction(String),

    #[error("point at infinity: omega = {0} is outside [0, 1)")]
    Domain(f64),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl SolverError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        SolverError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;

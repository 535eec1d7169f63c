use thiserror::Error;

use crate::params::ValidationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change of the tail classification on [{lo}, {hi}] ({class} at both ends)")]
    NoSignChange { lo: f64, hi: f64, class: String },

    #[error("bisection failed to converge: {reason} (bracket [{lo}, {hi}], {iterations} iterations)")]
    ConvergenceFailure { reason: String, lo: f64, hi: f64, iterations: usize },

    #[error("fit window too short: {periods:.2} periods in log r, need at least {required}")]
    WindowTooShort { periods: f64, required: f64 },

    #[error("not enough data: {found} samples, need at least {required}")]
    InsufficientData { found: usize, required: usize },

    #[error("evaluation at r = {r} outside the profile range [{lo}, {hi}]")]
    Extrapolation { r: f64, lo: f64, hi: f64 },

    #[error("subcritical-like oscillation: Emden-Fowler profile crosses zero at r = {r}")]
    SubcriticalOscillation { r: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("curve is monotone: no extrema of lambda(theta) found")]
    CurveMonotone,

    #[error("need at least {required} branch points, found {found}")]
    InsufficientBranchPoints { found: usize, required: usize },

    #[error("sweep degenerate: {failed} of {total} shoots failed")]
    SweepDegenerate { failed: usize, total: usize, diagnostics: Vec<String> },

    #[error("least-squares fit failed: {0}")]
    FitFailure(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

use thiserror::Error;

/// Failure modes of the estimation and quadrature routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter was NaN or infinite where a finite value is required.
    #[error("non-finite value {value} for {arg}")]
    NonFinite { arg: &'static str, value: f64 },

    /// A parameter violated a domain constraint (range, ordering, ...).
    #[error("invalid {arg}: {reason}")]
    Invalid { arg: &'static str, reason: &'static str },

    /// Inversion target outside the range of the transform.
    #[error("{value} is outside the range of {transform}")]
    OutsideRange { transform: &'static str, value: f64 },

    /// Stage-One statistic k <= 0 cannot arise under the indicator rule,
    /// and k = 0 sends the conditional estimate to -infinity.
    #[error("stage-One k_final = 0 is degenerate: the conditional MLE diverges")]
    DegenerateStatistic,

    /// Stage-One statistic with the wrong sign for the indicator rule.
    #[error("k_final = {0} on stage One is inconsistent with the stopping rule")]
    InconsistentOutcome(f64),

    /// Root finder ran out of iterations (should not occur for valid input).
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: u32, residual: f64 },

    /// No sign change found while bracketing a root.
    #[error("no bracket for {what} within [{lo}, {hi}]")]
    NoBracket { what: &'static str, lo: f64, hi: f64 },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tol:e}")]
    QuadratureAccuracy { estimate: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(arg: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { arg, value })
    }
}

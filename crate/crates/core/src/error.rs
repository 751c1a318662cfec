use nalgebra::DVector;
use thiserror::Error;

use crate::solver::WorkCounters;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The innovation covariance of a correction step was singular to working precision.
    #[error("step {step} (t = {t}) failed: innovation covariance is singular (diagonal ratio {condition:e})")]
    StepFailure { step: usize, t: f64, condition: f64 },

    /// The filter produced non-finite or unbounded values.
    #[error("solver diverged at step {step} (t = {t})")]
    Divergence {
        step: usize,
        t: f64,
        /// Mean of the last state that was still finite.
        last_finite_mean: DVector<f64>,
        last_finite_t: f64,
        /// Work spent up to and including the failed step.
        work: WorkCounters,
    },

    #[error("t = {t} is outside the solution span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("closed loop is not stable (spectral radius {spectral_radius})")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("gradient step left the stabilizing set at iteration {iteration}; reduce the step size")]
    StepLeftStabilizingSet { iteration: usize },

    #[error("noise covariance is singular")]
    SingularNoise,

    #[error("system is not stabilizable")]
    NotStabilizable,

    #[error("perturbation violates the nullspace condition (norm of Delta*K = {norm:e})")]
    NullspaceViolation { norm: f64 },

    #[error("regressor is rank deficient (condition number {condition:e})")]
    SingularRegressor { condition: f64 },
}

impl Error {
    /// True for errors caused by malformed input rather than by the mathematics
    /// of the instance (unstable closed loops, missing steady states, ...).
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Dimension(_) | Error::InvalidParameter(_))
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

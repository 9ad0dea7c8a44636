use thiserror::Error;

/// Errors produced by the solvers, the optimizer and the propagator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-absorbing potential has no laser realization (Im V = {im_v})")]
    NonAbsorbing { im_v: f64 },

    #[error("ill-conditioned transfer-matrix product (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("singular matching system")]
    Singular,

    #[error("near-defective segment matrix (eigenvector condition {condition:.3e})")]
    NearDefective { condition: f64 },

    #[error("integration did not converge after {steps} steps (last change {change:.3e})")]
    NotConverged { steps: usize, change: f64 },

    #[error("no feasible starting point: {0}")]
    NoFeasibleStart(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error(
        "truncation tolerance not met: {what} residual {residual:.3e} exceeds {tolerance:.1e}"
    )]
    Truncation {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

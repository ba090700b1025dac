use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue iteration did not converge for matrix {0:?}")]
    EigenNoConvergence(Vec<f64>),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("integration diverged at t = {t}")]
    Divergent { t: f64, state: Vec<f64> },

    #[error("covariance lost physicality at t = {t}: min symplectic eigenvalue {nu_min}")]
    Unphysical { t: f64, nu_min: f64 },

    #[error("nonphysical input: {0}")]
    Nonphysical(String),

    #[error("fixed point search did not converge at drive {drive}")]
    FixedPointNoConvergence { drive: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

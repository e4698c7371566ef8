use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("exponent error: {0}")]
    Exponent(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("step {dt} violates the stability bound, use dt <= {suggested}")]
    Cfl { dt: f64, suggested: f64 },
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("kernel bound violated: {0}")]
    Kernel(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("localization error: {0}")]
    Localization(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

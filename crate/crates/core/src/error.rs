use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite sample at node {index} (x = {x})")]
    NonFiniteSample { index: usize, x: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("blow-up: non-finite value produced at step {0}")]
    BlowUp(usize),
    #[error("horizon T = {horizon} exceeds T* = {t_star}")]
    HorizonExceedsTstar { horizon: f64, t_star: f64 },
    #[error("insufficient lags: need at least 5, got {0}")]
    InsufficientLags(usize),
    #[error("tail budget exceeded: {0}")]
    TailBudget(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

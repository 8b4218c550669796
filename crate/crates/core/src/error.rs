use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("regression degenerate at step {step}: {active} active paths for {basis} basis functions")]
    RegressionDegenerate {
        step: usize,
        active: usize,
        basis: usize,
    },

    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),

    #[error("bundle format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

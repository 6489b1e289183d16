use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite value {value} at t = {t}")]
    NonFinite { t: f64, value: f64 },
    #[error("delay grid mismatch: {0}")]
    Grid(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

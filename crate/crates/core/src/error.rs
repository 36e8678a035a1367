use thiserror::Error;

/// Errors raised while validating inputs or running an analysis.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid subject data: {0}")]
    InvalidData(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
}

pub type Result<T> = std::result::Result<T, Error>;

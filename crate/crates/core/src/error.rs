use thiserror::Error;

use crate::config::PenaltyKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FairGmError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("penalty {0:?} is not differentiable and cannot be used for fitting")]
    UnsupportedPenaltyGradient(PenaltyKind),

    #[error("missing local solution for group {0}")]
    MissingLocalSolution(usize),

    #[error("fair fitting needs at least two groups")]
    TooFewGroups,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("line search exceeded ell = {0:e}")]
    LineSearchFailed(f64),
}

pub type Result<T> = std::result::Result<T, FairGmError>;

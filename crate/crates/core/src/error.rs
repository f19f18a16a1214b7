use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RcmError {
    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("unknown instance `{0}`")]
    UnknownInstance(String),

    #[error("unknown relational variable {0}")]
    UnknownVariable(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is cyclic; an acyclic abstract ground graph requires an acyclic model")]
    CyclicModel,

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("infeasible skeleton sizes: {0}")]
    InfeasibleSizes(String),

    #[error("state limit exceeded: {needed} states needed, limit is {limit}")]
    StateLimitExceeded { needed: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = RcmError> = std::result::Result<T, E>;

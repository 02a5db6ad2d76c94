use thiserror::Error;

/// Errors raised by tensor primitives and everything built on top of them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward seed must be a scalar, got shape {0:?}")]
    NonScalarSeed(Vec<usize>),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Errors raised while building or evaluating flow models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error("input has {got} features, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("log density is not differentiable at q = {0}")]
    NonDifferentiable(f64),
    #[error("unknown target kind `{0}`")]
    UnknownTarget(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("invalid starting point: {0}")]
    InvalidStart(String),
    #[error("step size initialization diverged at the smallest probe {0:e}")]
    StepSizeInit(f64),
    #[error("sequence is constant")]
    ConstantSequence,
    #[error("not enough draws: need at least {needed}, found {found}")]
    TooFewDraws { needed: usize, found: usize },
    #[error("chains have unequal lengths")]
    RaggedChains,
    #[error("adaptation accumulators are not finite")]
    NonFiniteAccumulator,
    #[error("warm-up of {0} iterations is too short (minimum 20)")]
    WarmupTooShort(usize),
}

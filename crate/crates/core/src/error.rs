use thiserror::Error;

/// Errors raised by channel synthesis, codebook construction and the optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid beam plan: {0}")]
    InvalidPlan(String),

    #[error("resolution {resolution} is below the element count {elements}")]
    OversamplingViolation { resolution: usize, elements: usize },

    #[error("connected codebook resolution {resolution} must equal the active count {active}")]
    ResolutionMismatch { resolution: usize, active: usize },

    #[error("codebook is empty")]
    EmptyCodebook,

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("invalid element index: {0}")]
    InvalidIndex(String),

    #[error("weights must all equal 1/K for this closed form")]
    UnsupportedWeights,

    #[error("power allocation undefined: every effective gain is zero")]
    UndefinedAllocation,

    #[error("{0} codewords cannot serve {1} users")]
    TooFewCodewords(usize, usize),

    #[error("search needs {needed} evaluations, above the cap of {cap}")]
    CapExceeded { needed: u128, cap: u128 },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

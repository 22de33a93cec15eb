use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure at iteration {iteration}: {context}")]
    NumericalFailure { iteration: usize, context: String },
    #[error("variable {0} is not reachable on this tape")]
    Dependency(usize),
    #[error("infeasible pattern: {0}")]
    Infeasible(String),
    #[error("noise estimation region is empty")]
    EmptyRegion,
    #[error("degenerate scale: encoded decoder mean is zero or anti-correlated with the data")]
    DegenerateScale,
    #[error("rank requirement not met: need at least {required} samples, got {got}")]
    Rank { required: usize, got: usize },
    #[error("training diverged at iteration {iteration}")]
    TrainingFailure { iteration: usize },
    #[error("chain stuck: no proposal accepted during {steps} burn-in steps")]
    StuckChain { steps: usize },
    #[error("reference image has zero norm")]
    ZeroReference,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

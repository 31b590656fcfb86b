use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not positive definite")]
    NotPositiveDefinite,
    #[error("singular design")]
    SingularDesign,
    #[error("degenerate residual")]
    DegenerateResidual,
    #[error("enumeration bound exceeded: {configurations} configurations > {bound}")]
    EnumerationBound { configurations: u128, bound: u128 },
    #[error("nesting condition not satisfied")]
    NestingViolated,
    #[error("degenerate ROC")]
    DegenerateRoc,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors produced by the placement toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("elliptic modulus out of range: k = {0} (supported range is [0, 1 - 1e-9])")]
    InvalidModulus(f64),

    #[error("invalid elastica parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate elastica (k below straight-line threshold): {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("planning failed in stage {stage}: {reason}")]
    PlanningFailed { stage: &'static str, reason: String },

    #[error("elastica fit failed: {0}")]
    FitFailed(String),

    #[error("simulation failed: {0}")]
    SimulationFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("sample points coincide (neighbour {neighbour})")]
    CoincidentSamples { neighbour: usize },

    #[error("neighbour directions do not span the space (rank {rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },

    #[error("agent {agent}: neighbour directions do not span the space (rank {rank} < {dim})")]
    AgentRankDeficient { agent: usize, rank: usize, dim: usize },

    #[error("step size {alpha} outside (0, {max}]")]
    StepSizeOutOfRange { alpha: f64, max: f64 },

    #[error("communication graph is not connected")]
    Disconnected,

    #[error("invalid formation: {0}")]
    InvalidFormation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("configuration is invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("mismatched fields across scenarios: {0}")]
    MismatchedFields(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

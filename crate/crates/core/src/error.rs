use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("direction grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible subproblem: {0}")]
    Infeasible(String),

    #[error("design failed at {side} beam {index}: {reason}")]
    Design {
        side: &'static str,
        index: usize,
        reason: String,
    },

    #[error("codebook file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("block tensor is not symmetric (residual {0:e})")]
    NotSymmetric(f64),

    #[error("tensor is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("block ({row},{col}) is not a multiple of the identity (relative deviation {deviation:e})")]
    NonScalarBlocks { row: usize, col: usize, deviation: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("jump system of the simple laminate is singular")]
    SingularJumpSystem,

    #[error("L1 - L2 is singular; perturb the phases")]
    SingularContrast,

    #[error("invalid laminate: {0}")]
    InvalidLaminate(String),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("sample has Im(sigma) = {0:e} <= 0")]
    WrongHalfPlane(f64),

    #[error("check requires dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("E and J directions are not mutually orthogonal (inner product {0:e})")]
    NotOrthogonal(f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

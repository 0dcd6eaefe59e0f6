use complab_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CellError {
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("phase contrast {0:e} exceeds the supported maximum of 1e6")]
    ContrastTooHigh(f64),
    #[error("sigma = {0} lies on the branch cut (-inf, 0]")]
    BranchCut(num_complex::Complex64),
    #[error("real symmetric part of a phase tensor is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, CellError>;

impl From<CellError> for CoreError {
    fn from(e: CellError) -> Self {
        match e {
            CellError::Core(c) => c,
            other => CoreError::Evaluation(other.to_string()),
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("matrix is not positive semi-definite (eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimTooLarge { dim: usize, max: usize },

    #[error("invalid spectrum: {0}")]
    BadSpectrum(String),

    #[error("cover grid would need {cells} cells (limit {limit})")]
    CoverTooLarge { cells: u128, limit: u128 },

    #[error("truncation insufficient: {0}")]
    TruncationInsufficient(String),

    #[error("centered deviation requested without a reference expectation source")]
    RefUnavailable,

    #[error("exact Gaussian mean unsupported for tensor order {0}")]
    UnsupportedOrder(usize),

    #[error("preconditioner Hessian is singular (eigenvalue {min_eigenvalue})")]
    SingularPhi { min_eigenvalue: f64 },

    #[error("inner Newton solve failed after {iterations} iterations (gradient norm {grad_norm})")]
    InnerSolveFailure { iterations: usize, grad_norm: f64 },

    #[error("loss is not twice differentiable")]
    NonSmoothLoss,
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg()))
    }
}

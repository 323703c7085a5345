use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (max defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("eigensolver did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },
    #[error("singular linear system (condition estimate {condition_estimate:.3e})")]
    SingularSystem { condition_estimate: f64 },
    #[error("singular shift-rule system (condition estimate {condition_estimate:.3e}); choose different shifts or pseudo-gaps")]
    SingularShiftRule { condition_estimate: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

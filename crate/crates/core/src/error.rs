use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("no non-singular starting design found after {attempts} attempts")]
    NoFeasibleStart { attempts: usize },

    #[error("cannot round design to {runs} runs: {reason}")]
    InfeasibleRounding { runs: usize, reason: String },

    #[error("construction invalid: {0}")]
    ConstructionInvalid(String),

    #[error("bad generators: {0}")]
    BadGenerators(String),

    #[error("every candidate model failed to fit")]
    AllModelsFailed,

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("eigendecomposition failed to converge")]
    DecompositionFailed,

    #[error("factor index {index} out of range for {factors} factors")]
    BadFactorIndex { index: usize, factors: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("object too large: {0}")]
    TooLarge(String),

    #[error("observable decomposition would need {0} instruments")]
    TooManyTerms(usize),

    #[error("intermediate state at step {0} has zero trace")]
    NonPositivePurity(usize),

    #[error("geometric series diverges (ratio {0:.4} >= 1)")]
    SeriesDiverges(f64),

    #[error("outcome {0} has negligible probability")]
    RareOutcome(usize),

    #[error("need at least two defined conditional columns, found {0}")]
    InsufficientColumns(usize),

    #[error("bin {bin} larger than {len} rows")]
    BinTooLarge { bin: usize, len: usize },

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

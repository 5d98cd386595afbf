use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical integration failed for antenna lag {lag}: non-finite result")]
    Integration { lag: usize },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below tolerance {tolerance:e}")]
    NotPositiveSemidefinite { eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not Hermitian: relative asymmetry {asymmetry:e}")]
    NotHermitian { asymmetry: f64 },

    #[error("{what}: dimension mismatch, expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("feedback/basis mismatch: {0}")]
    SchemeMismatch(String),

    #[error("channel vector has zero norm")]
    ZeroChannel,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            actual,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular model: {0}")]
    Singular(String),

    #[error("quadratic term ({i}, {j}) = {value} is positive; problem is not submodular")]
    NotSubmodular { i: usize, j: usize, value: f64 },

    #[error("relaxation parameter ({i}, {j}) = {value} outside [0, 1]")]
    GammaOutOfRange { i: usize, j: usize, value: f64 },

    #[error("dimension {n} exceeds the enumeration cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("every point of the search space has already been evaluated")]
    ExhaustedSpace,

    #[error("unknown symbol {0:?}")]
    UnknownSymbol(char),

    #[error("point {0} does not decode to a valid sequence")]
    InvalidPoint(String),

    #[error("line {line}: {message}")]
    Load { line: usize, message: String },

    #[error("{0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

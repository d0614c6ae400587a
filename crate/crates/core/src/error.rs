use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank-deficient design: column(s) {columns:?} are collinear with earlier columns")]
    RankDeficient { columns: Vec<usize> },

    #[error("no stored prediction for row {0}")]
    MissingPrediction(usize),

    #[error("predictor cannot evaluate a vector outside its bound dataset")]
    UnboundQuery,

    #[error("y outside selection polyhedron (max violation {0:.3e})")]
    OutsidePolyhedron(f64),

    #[error("interval numerically empty")]
    EmptyInterval,

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time {t} lies outside the signal domain [{start}, {end})")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("segment starting at {start} does not abut the domain end {end}")]
    NotContiguous { start: f64, end: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("contraction factor {rho} >= 1, the approximation bound is vacuous")]
    VacuousBound { rho: f64 },

    #[error("matrix is not Hurwitz")]
    NotHurwitz,

    #[error("pair is not reachable or not observable")]
    Degenerate,

    #[error("input {value} exceeds the admissible bound {bound}")]
    InputOutOfBounds { value: f64, bound: f64 },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("state blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

use thiserror::Error;

use crate::oracle::OracleSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mean {mean} is outside the {family} domain")]
    MeanDomain { family: &'static str, mean: f64 },

    #[error("invalid family parameter: {0}")]
    InvalidFamily(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate instance: every alternative is indistinguishable from the optimal set")]
    Degenerate,

    #[error("oracle did not converge after {iterations} iterations (relative gap {relative_gap:.3e})")]
    NotConverged {
        iterations: usize,
        relative_gap: f64,
        best: Box<OracleSolution>,
    },

    #[error("bound undefined: {0}")]
    BoundDomain(String),

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

use thiserror::Error;

/// Errors produced by measure construction, solvers and coefficients.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    Empty,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("non-finite value at index {idx}: {value}")]
    NonFinite { idx: usize, value: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("capacity exceeded: {requested} atoms requested, budget is {budget}")]
    Capacity { requested: usize, budget: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate marginal: {0}")]
    DegenerateMarginal(&'static str),

    #[error("infinite alpha has no arithmetic cost; use the marginal transport dependency")]
    InfiniteAlpha,

    #[error("infeasible transport problem: source mass {src} vs destination mass {dst}")]
    Infeasible { src: f64, dst: f64 },

    #[error("sinkhorn did not converge at eta={eta}: marginal violation {violation}")]
    NotConverged { eta: f64, violation: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Coarse classification used by the command line front end.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Capacity { .. } => ErrorKind::Capacity,
            Error::NotConverged { .. } | Error::Numerical(_) => ErrorKind::Numeric,
            Error::InvalidParameter(_) | Error::InfiniteAlpha => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Capacity,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;

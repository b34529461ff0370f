use thiserror::Error;

use crate::sim::Sample;

pub type Result<T> = std::result::Result<T, Error>;

/// State captured when a simulation aborts on a non-finite or oversized monitor.
#[derive(Debug, Clone)]
pub struct BlowUp {
    pub t: f64,
    pub reason: String,
    pub last_samples: Vec<Sample>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies outside the set at component {index} (value {value})")]
    NotInSet { index: usize, value: f64 },

    #[error("invalid bounds at component {index}: lower {lower} > upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("agent index {0} out of range")]
    InvalidAgent(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("sampling region is degenerate (zero volume or unbounded)")]
    DegenerateRegion,

    #[error("game is not strictly monotone on the feasible subspace (min eigenvalue {0:e})")]
    NotMonotone(f64),

    #[error("active-set enumeration exceeded its budget of {0} candidate solves")]
    BudgetExceeded(u64),

    #[error("no active set produced a consistent KKT point ({tried} candidates tried, {singular} singular)")]
    NoActiveSet { tried: u64, singular: u64 },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("pair (A_ii, b_i) of agent {agent} is not controllable (rcond {rcond:e})")]
    NotControllable { agent: usize, rcond: f64 },

    #[error("matrix is not Hurwitz (max real eigenvalue {0})")]
    NotHurwitz(f64),

    #[error("coupling bound for agent {agent} cannot be certified: {reason}")]
    SigmaNotCertifiable { agent: usize, reason: String },

    #[error("Theta_{agent},{level} = {value:e} violates the nonzero guard")]
    ThetaGuard { agent: usize, level: usize, value: f64 },

    #[error("gain condition fails: {0}")]
    GainViolation(String),

    #[error("missing derivative callback: {0}")]
    MissingDerivative(&'static str),

    #[error("consensus disagreement: {0}")]
    Consensus(String),

    #[error("simulation blew up at t = {}: {}", .0.t, .0.reason)]
    BlowUp(Box<BlowUp>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::BlowUp(_) => 4,
            _ => 3,
        }
    }
}

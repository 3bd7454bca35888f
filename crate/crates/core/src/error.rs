use thiserror::Error;

use crate::network::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no route connects O-D pair {origin} -> {dest}")]
    DisconnectedOd { origin: NodeId, dest: NodeId },

    #[error("O-D pair {origin} -> {dest} has EV demand but no route passes a charging-eligible node")]
    NoChargingOption { origin: NodeId, dest: NodeId },

    #[error("duplicate link id {0}")]
    DuplicateLink(u32),

    #[error("invalid link {id}: {reason}")]
    InvalidLink { id: u32, reason: String },

    #[error("negative flow {0}")]
    NegativeFlow(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("extended path charges at closed station {0}")]
    StationClosed(NodeId),

    #[error("equilibrium solver did not converge after {iterations} iterations (gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("infeasible mode: {0}")]
    InfeasibleMode(String),

    #[error("brute-force oracle refused an instance with {strategies} strategies over {od_pairs} O-D pairs")]
    TooLarge { strategies: usize, od_pairs: usize },

    #[error("station has chargers but no load; profitability cannot hold")]
    ZeroLoad,

    #[error("no feasible design found: {0}")]
    NoFeasibleDesign(String),

    #[error("total demand is zero")]
    ZeroDemand,

    #[error("integer adjustment exceeded the budget: {total} > {budget}")]
    BudgetViolation { total: f64, budget: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format version {found} is not supported (expected {expected}); {hint}")]
    VersionMismatch {
        found: u32,
        expected: u32,
        hint: String,
    },

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

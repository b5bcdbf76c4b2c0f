use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),

    #[error("invalid loss table: {0}")]
    InvalidTable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("risk level {alpha} must lie in (1/({n}+1), 1]")]
    LevelOutOfRange { alpha: f64, n: usize },

    #[error("{0} loss table is not monotone; run monotonization first")]
    NonMonotone(&'static str),

    #[error("infeasible calibration: {0}")]
    Infeasible(String),

    #[error("feasible set is empty; infeasible at requested risk levels")]
    EmptyFeasibleSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data { .. } | Error::InvalidTable(_) => 2,
            Error::Infeasible(_) | Error::EmptyFeasibleSet => 3,
            _ => 1,
        }
    }
}

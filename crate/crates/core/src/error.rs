use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// An iterative routine hit its iteration cap. `best_bound` is the best
    /// value available when it stopped.
    #[error("numerical failure in {routine} after {iterations} iterations (best bound {best_bound:e})")]
    NumericalFailure { routine: &'static str, iterations: usize, best_bound: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("scenario schema error at line {line}, field `{field}`: {message}")]
    Schema { field: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingFailure { epoch: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

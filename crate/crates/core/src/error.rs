use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The oracle itself failed. This is never a synonym for "unschedulable".
    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("initial point is infeasible: {point:?}")]
    InitialInfeasible { point: Vec<f64> },

    #[error("no feasible rounding for period variable {dim}")]
    RoundingInfeasible { dim: usize },

    #[error("barrier is infinite: response time of task {task} reached its deadline")]
    InfiniteBarrier { task: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("time limit exceeded")]
    Timeout,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

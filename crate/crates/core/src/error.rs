use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel row ({state}, {action}) is not a distribution (sum {row_sum})")]
    NonStochasticRow {
        state: usize,
        action: usize,
        row_sum: f64,
    },
    #[error("initial distribution is not a distribution (sum {0})")]
    BadInitialDistribution(f64),
    #[error("discount {0} outside (0, 1)")]
    BadDiscount(f64),
    #[error("policy row {state} is not a distribution (sum {row_sum})")]
    BadPolicyRow { state: usize, row_sum: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("singular linear system")]
    SingularSystem,
    #[error("input is not a probability distribution")]
    NotDistribution,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("argument {0} outside the domain of (f')^-1")]
    DomainError(f64),
    #[error("bad environment spec: {0}")]
    BadSpec(String),
    #[error("magnitude {magnitude} out of range for perturbation mode {mode}")]
    BadMagnitude { mode: String, magnitude: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid price {0}: prices must be non-negative")]
    InvalidPrice(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("round {t}: retailer ordered {order} but its perceived distribution implies {implied}")]
    ConsistencyViolation { t: usize, order: f64, implied: f64 },

    #[error("round {t}: benchmark {benchmark} below realized profit {realized}")]
    BenchmarkViolation {
        t: usize,
        benchmark: f64,
        realized: f64,
    },

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("{0}")]
    Config(#[from] crate::experiment::ConfigError),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("allele frequency of an empty population is undefined")]
    EmptyPopulation,
    #[error("stepping an extinct population")]
    Extinct,
    #[error("invalid stop specification: {0}")]
    InvalidStop(String),
    #[error("stiff region; reduce tol or t_end (step size underflow at t = {t})")]
    StepUnderflow { t: f64 },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("critical case not covered by the formula (b = d)")]
    CriticalBranching,
    #[error("chain too large for the dense oracle: {states} states (limit {limit})")]
    ChainTooLarge { states: usize, limit: usize },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

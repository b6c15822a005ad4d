use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("query budget exhausted after {used} queries (budget {budget})")]
    BudgetExhausted { used: u64, budget: u64 },
    #[error("relative margin outside [-{cap}, {cap}] ({side})")]
    RangeExceeded { cap: f64, side: &'static str },
    #[error("brute force limited to n <= {max_n}, d <= {max_d} (got n = {n}, d = {d})")]
    SizeLimitExceeded { n: usize, d: usize, max_n: usize, max_d: usize },
    #[error("point {index} received no vote")]
    NoVote { index: usize },
    #[error("no halfspace is consistent with the inferred labels")]
    Infeasible,
    #[error("verification gave up after {attempts} batch attempts")]
    GiveUp { attempts: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

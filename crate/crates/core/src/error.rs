use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty state space")]
    EmptyStateSpace,

    #[error("transition row for state {state}, action {action} sums to {sum} (expected 1)")]
    RowNotNormalized { state: usize, action: usize, sum: f64 },

    #[error("transition entry for state {state}, action {action} is {value}, outside [0, 1]")]
    ProbabilityOutOfRange { state: usize, action: usize, value: f64 },

    #[error("non-finite reward or reward maximum: {0}")]
    NonFiniteReward(String),

    #[error("invalid zero state {state}: {reason}")]
    InvalidZeroState { state: usize, reason: String },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("chain is not unichain on this truncation: state {state} cannot reach the zero state")]
    Reducible { state: usize },

    #[error("target state {target} is unreachable from state {state}")]
    UnreachableTarget { state: usize, target: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("numerical overflow in policy update at state {state}")]
    UpdateOverflow { state: usize },

    #[error("invalid ledger: {0}")]
    InvalidLedger(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("capacity region infeasible: best slack {epsilon}")]
    Infeasible { epsilon: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("regret bound violated: regret {regret} > bound {bound}")]
    RegretBoundViolated { regret: f64, bound: f64 },

    #[error("lyapunov value bound violated at state {state}: margin {margin}")]
    LyapunovViolated { state: usize, margin: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

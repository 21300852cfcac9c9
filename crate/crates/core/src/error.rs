use thiserror::Error;

/// Errors surfaced by the controller, oracle and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("initial state outside the safe set: {0}")]
    UnsafeStart(String),

    #[error("numerical fault at step {step}: {what}")]
    Numerical { step: usize, what: String },

    #[error("safety breach: {0}")]
    SafetyBreach(String),

    #[error("infeasible constraint pair: {0}")]
    Infeasible(String),

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

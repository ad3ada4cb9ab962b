//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An index fell outside the table or vocabulary it addresses.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// The operation is not valid in the current state (empty buffer,
    /// non-monotone iteration tag, ...).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A density ratio is infinite because the behavior policy assigns zero
    /// mass where the current policy does not.
    #[error("infinite ratio at cell {index}: behavior probability is zero where target probability is {p_theta}")]
    InfiniteRatio { index: usize, p_theta: f64 },

    /// Training produced a non-finite quantity and must abort rather than
    /// propagate NaN into parameters or metrics.
    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    /// A run configuration failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the command-line front end maps this error to.
    /// Config problems exit 2, numerical aborts exit 3, everything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient capacity: {total} available, {required} required")]
    Capacity { total: u64, required: u64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("graph is not strongly connected")]
    Connectivity,

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A node did not receive a message it needs for the current round.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

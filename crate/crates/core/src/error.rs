use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("weights must be non-negative and sum to 1 (sum = {sum})")]
    WeightNorm { sum: f64 },

    #[error("round has no client updates")]
    EmptyRound,

    #[error("no previous cost recorded for client {client_id}")]
    MissingHistory { client_id: u64 },

    #[error("invalid cost {cost} for client {client_id}")]
    InvalidCost { client_id: u64, cost: f64 },

    #[error("client {client_id} reported zero training samples")]
    EmptyClient { client_id: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("round barrier violated: {0}")]
    BarrierViolation(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("frame error: {0}")]
    Frame(String),

    #[error("frame payload of {len} bytes exceeds limit of {max} bytes")]
    Oversize { len: u64, max: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure at runtime.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

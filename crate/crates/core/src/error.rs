//! Error types shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("invalid score: {0}")]
    InvalidScore(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown action: {0}")]
    MissingAction(String),

    #[error("observation contradicts belief: {0}")]
    Contradiction(String),

    #[error("empty candidate pool")]
    NoCandidates,

    #[error("no path from cell {from} to cell {to}")]
    NoPath { from: usize, to: usize },

    #[error("empty policy pool: {0}")]
    EmptyPool(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("coordination chain stalled: {0}")]
    ChainStall(String),

    #[error("event rejected: {0}")]
    EventRejected(String),
}

pub type Result<T> = std::result::Result<T, Error>;

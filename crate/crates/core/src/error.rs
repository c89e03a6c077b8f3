use std::time::Duration;

use thiserror::Error;

use crate::sched::BackendStats;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph format error at line {line}: {msg}")]
    GraphFormat { line: usize, msg: String },

    #[error("no quiescence after {budget:?} ({} tasks pushed, {} consumed)", stats.pushes, stats.pops + stats.dead_tasks_eliminated)]
    Timeout { budget: Duration, stats: BackendStats },

    #[error("distance mismatch at node {node}: got {got}, expected {expected}")]
    OracleMismatch { node: usize, got: f64, expected: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::precision::PrecisionLevel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular: pivot {column} vanished")]
    Singular { column: usize },

    #[error("entry overflows the {level} format")]
    Overflow { level: PrecisionLevel },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not row-stochastic: row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("complex matrix market files are not supported")]
    ComplexUnsupported,

    #[error("row {row} of its diagonal block is entirely zero")]
    DegenerateRow { row: usize },

    #[error("transition graph is not strongly connected")]
    Reducible,

    #[error("block {block} has zero probability mass")]
    ZeroBlock { block: usize },

    #[error("richardson iteration diverged at step {iteration}")]
    Divergence { iteration: usize },

    #[error("gpu spec has no throughput entry for {0}")]
    UnknownLevel(PrecisionLevel),

    #[error("block {block}: {source}")]
    InBlock {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("outer iteration {iteration}: {source}")]
    AtOuterIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_block(self, block: usize) -> Error {
        Error::InBlock {
            block,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtOuterIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Strips block/iteration annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::InBlock { source, .. } | Error::AtOuterIteration { source, .. } => source.root(),
            other => other,
        }
    }
}

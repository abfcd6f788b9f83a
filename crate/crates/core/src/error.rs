use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bit string must be non-empty")]
    EmptyBitString,
    #[error("invalid bit character {0:?}")]
    InvalidBitChar(char),
    #[error("position {pos} out of range for length {len}")]
    PositionOutOfRange { pos: usize, len: usize },
    #[error("position {0} flipped twice")]
    DuplicatePosition(usize),
    #[error("neighbourhood size {m} exceeds problem size {n}")]
    OperatorTooLarge { m: usize, n: usize },
    #[error("invalid neighbourhood size {0}, must be at least 1")]
    InvalidOperator(usize),
    #[error("portfolio must be non-empty and strictly increasing, got {0:?}")]
    InvalidPortfolio(Vec<usize>),
    #[error("fitness {i} is outside the domain 0..{n}")]
    FitnessOutOfDomain { i: usize, n: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("unknown {kind} {value:?}")]
    UnknownName { kind: &'static str, value: String },
    #[error("malformed metadata line {line}: {reason}")]
    Metadata { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("environment invariant violated: {0}")]
    Invariant(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },

    #[error("overflow while integrating segment {segment} (lambda = {lambda})")]
    Overflow { segment: usize, lambda: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("could not bracket eigenvalue {n}: {reason}")]
    BracketFailure { n: usize, reason: String },

    #[error("no convergence after {iterations} iterations: {what}")]
    NonConvergence { what: String, iterations: usize },

    #[error("counter disagreement at lambda = {lambda}: sign count {sign_count}, phase count {phase_count}")]
    CounterDisagreement {
        lambda: f64,
        sign_count: usize,
        phase_count: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow { .. }
                | Error::GridTooCoarse(_)
                | Error::BracketFailure { .. }
                | Error::NonConvergence { .. }
                | Error::CounterDisagreement { .. }
        )
    }
}

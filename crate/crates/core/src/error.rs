use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("predictability violation at node {node}: value reads randomness revealed at node {reads}")]
    Predictability { node: usize, reads: usize },

    #[error("CFL condition violated: number {number:.4} exceeds {limit}")]
    Cfl { number: f64, limit: f64 },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("solution value {value} escaped the kinetic window [{lo}, {hi}] at step {step}")]
    RangeEscape { step: usize, value: f64, lo: f64, hi: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

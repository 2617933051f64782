use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::sim::Snapshot;
use crate::validation::ExpansionReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },

    #[error("invalid interval ({lower}, {upper})")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("rho must lie in (0, 1), got {0}")]
    RhoOutOfRange(f64),

    #[error("window expansions need r > 1, got {0}")]
    WindowTooSmall(f64),

    #[error("integral of z^j e^(-theta z) over an unbounded interval diverges for theta = 0")]
    DivergentIntegral,

    #[error("quadrature did not reach tolerance: value {value}, error estimate {error}")]
    QuadratureNotConverged { value: f64, error: f64 },

    #[error("invalid offspring law: {0}")]
    InvalidLaw(&'static str),

    #[error("invalid drift parameters: {0}")]
    InvalidParams(&'static str),

    #[error("observation schedule must be positive and strictly increasing")]
    InvalidSchedule,

    #[error("max_population must be at least 1")]
    InvalidCap,

    #[error("population cap {cap} exceeded before t = {time}")]
    PopulationCapExceeded {
        cap: usize,
        time: f64,
        partial: Vec<Snapshot>,
    },

    #[error("population cap exceeded in {failed} replicate(s); partial report attached")]
    PartialReport {
        failed: usize,
        report: Box<ExpansionReport>,
    },

    #[error("regime mismatch: {0}")]
    RegimeMismatch(&'static str),

    #[error("expansion needs {needed} martingale weights, got {got}")]
    MissingWeights { needed: usize, got: usize },

    #[error("at least 2 replicates are needed for a standard error, got {0}")]
    TooFewReplicates(usize),

    #[error("tail window holds {0} checkpoint(s); at least 2 are needed")]
    TailTooShort(usize),

    #[error("all importance weights are zero (every path was absorbed)")]
    DegenerateWeights,

    #[error("invalid expansion order: {0}")]
    InvalidOrder(&'static str),

    #[error("time grid must be positive and strictly increasing")]
    InvalidGrid,
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Negative { name, value })
    }
}

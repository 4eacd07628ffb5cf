//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by data loading, fitting, smoothing and resampling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("missing required column `{0}` in header")]
    MissingColumn(&'static str),

    #[error("missing header line")]
    MissingHeader,

    #[error("non-increasing {field} at row {row}")]
    NonMonotone { field: &'static str, row: usize },

    #[error("non-finite {field} at row {row}")]
    NonFinite { field: &'static str, row: usize },

    #[error("need at least 3 records, found {0}")]
    TooFewRecords(usize),

    #[error("zero age difference between row {row} and the next")]
    ZeroAgeDifference { row: usize },

    #[error("non-positive accumulation rate {value} at interval {index}")]
    NonPositiveRate { index: usize, value: f64 },

    #[error("temperature {x} at index {index} lies outside the admissible band ({lo}, {hi})")]
    TempOutsideBand { index: usize, x: f64, lo: f64, hi: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("input too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("mismatched input lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("non-positive weight {value} at index {index}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("1 + gamma*x is not positive at index {index} (gamma = {gamma}, x = {x})")]
    DomainViolation { index: usize, gamma: f64, x: f64 },

    #[error("no sample points within bandwidth {h} of query age {z}")]
    EmptyWindow { z: f64, h: f64 },

    #[error("lag-1 ratio undefined: all residuals after the first are zero")]
    ZeroLagDenominator,

    #[error("innovation resampling exceeded {0} retries; innovation spread is degenerate")]
    ResampleRetryCap(usize),

    #[error("{failed} of {total} bootstrap replicates failed (allowed at most {allowed})")]
    TooManyReplicateFailures {
        failed: usize,
        total: usize,
        allowed: usize,
    },

    #[error("{failed} of {total} simulation runs failed (allowed at most {allowed})")]
    TooManyRunFailures {
        failed: usize,
        total: usize,
        allowed: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

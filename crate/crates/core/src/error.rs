use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid encoding parameters: {0}")]
    InvalidParams(String),

    #[error("cohort {cohort} out of range [0, {m})")]
    CohortOutOfRange { cohort: u32, m: u32 },

    #[error("on-bit count {count} out of range [0, {k}]")]
    CountOutOfRange { count: u32, k: u32 },

    #[error("bit width {0} too small for the constant table (need k >= 4)")]
    WidthTooSmall(u32),

    #[error("sample size must be at least 1")]
    ZeroSampleSize,

    #[error("sample size {size} exceeds the {available} available reports")]
    SampleTooLarge { size: usize, available: usize },

    #[error("truth probability 1/2 makes the estimator undefined")]
    DegenerateSurvey,

    #[error("{0} outside [0, 1]")]
    ProbabilityOutOfRange(&'static str),

    #[error("report from client {0:?} carries no true value")]
    UnlabeledReport(String),

    #[error(
        "invalid label {0:?}: labels must be nonempty and free of ':', ',', tabs and newlines"
    )]
    InvalidLabel(String),

    #[error("empty report list")]
    EmptyCorpus,

    #[error("empty analysis batch")]
    EmptyBatch,

    #[error("invalid fleet configuration: {0}")]
    InvalidFleet(String),

    #[error("exponential rate must be positive, got {0}")]
    NonPositiveRate(f64),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("store fingerprint {found} does not match session parameters {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("cannot merge stores built with different parameters")]
    IncompatibleStores,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

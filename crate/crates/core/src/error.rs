use thiserror::Error;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("ray is parallel to the plane")]
    ParallelRay,
    #[error("point lies behind the camera")]
    BehindCamera,
    #[error("vector is not unit length (norm {0})")]
    NonUnit(f64),
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("mask is empty")]
    EmptyMask,
    #[error("run-length counts sum to {got}, expected {expected}")]
    RleLength { got: u64, expected: u64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("track has {len} detections, minimum is {min}")]
    TrackTooShort { len: usize, min: usize },
    #[error("no hypothesis could be lifted to 3D")]
    NoValidHypothesis,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

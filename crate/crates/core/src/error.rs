use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("part index {index} out of range for {parts} parts")]
    PartOutOfRange { index: usize, parts: usize },
    #[error("part {0} is already observed")]
    DuplicatePart(usize),
    #[error("instance has {0} parts; supported range is 1..=64")]
    PartCount(usize),
    #[error("feature index {index} does not fit in {hash_bits} hash bits")]
    FeatureOutOfRange { index: u32, hash_bits: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("action {0} is not allowed in the current state")]
    ActionNotAllowed(String),
    #[error("{parts} parts exceeds the enumeration limit of {limit}")]
    EnumerationLimit { parts: usize, limit: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

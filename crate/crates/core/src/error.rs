use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are coarse on purpose: front ends map them onto exit codes
/// (usage/config, data, internal invariant) without inspecting messages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The caller asked for something the inputs cannot support
    /// (e.g. class proportions of an unlabeled dataset).
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value is out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Input data violates a dataset invariant (non-finite value, bad label, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A numeric routine failed (singular covariance, non-PD matrix).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An internal invariant did not hold. Always a bug.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the library surface.
///
/// Algorithm-level refusals (`InsufficientData`, `NoStoppingPoint`,
/// `SelectionFailed`) are ordinary outcomes for the experiment harness: a
/// trial that hits one is recorded as a failed trial, not a crash.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A value, node, or level does not belong to the domain at hand.
    #[error("domain error: {0}")]
    Domain(String),

    /// The database is too small for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The exponential mechanism was handed an empty candidate set.
    #[error("empty candidate set")]
    EmptyChoice,

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A sparse-vector session was queried after it halted.
    #[error("sparse-vector session already halted")]
    SessionClosed,

    /// A recursion depth beyond what the decomposition produced.
    #[error("depth {requested} exceeds the {available} available levels")]
    Depth { requested: u32, available: u32 },

    /// Every sparse-vector query was answered below threshold.
    #[error("no stopping point found within {0} queries")]
    NoStoppingPoint(u32),

    /// The choosing mechanism declined to output a candidate.
    #[error("selection mechanism returned no candidate")]
    SelectionFailed,

    /// The audit inputs do not form a valid neighboring instance.
    #[error("audit setup: {0}")]
    AuditSetup(String),

    /// The brute-force oracle refuses domains it cannot materialize.
    #[error("oracle domain too large: bit width {0} exceeds 8")]
    OracleTooLarge(u32),

    /// Malformed input text.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable short label of the variant, used as an outcome key in audit
    /// histograms and trial logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InsufficientData(_) => "insufficient-data",
            Error::EmptyChoice => "empty-choice",
            Error::Param(_) => "param",
            Error::SessionClosed => "session-closed",
            Error::Depth { .. } => "depth",
            Error::NoStoppingPoint(_) => "no-stopping-point",
            Error::SelectionFailed => "selection-failed",
            Error::AuditSetup(_) => "audit-setup",
            Error::OracleTooLarge(_) => "oracle-too-large",
            Error::Parse(_) => "parse",
        }
    }
}

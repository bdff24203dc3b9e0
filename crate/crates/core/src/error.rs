//! Crate-wide error taxonomy.
//!
//! One enum covers every module so callers can match on failure class without
//! chasing per-module error types. Reader errors carry byte offsets so a
//! corrupt file is diagnosable from the message alone.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    /// Input shorter than one analysis frame.
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    /// Matrix/grid dimensions disagree with what the operation requires.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value is out of its legal range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An operation that needs data received none.
    #[error("empty input")]
    EmptyInput,

    /// Training data has fewer frames than codebook entries.
    #[error("insufficient data: need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A code index exceeds the vocabulary it must index into.
    /// `offset` is set when the bad code came from a file.
    #[error("code {code} out of range (max {max}){}", offset_suffix(.offset))]
    CodeOutOfRange {
        code: u64,
        max: u64,
        offset: Option<u64>,
    },

    /// A quantizer stack with no trained layers was used.
    #[error("quantizer stack is untrained")]
    NotTrained,

    /// Tokens, codebooks, and config do not describe the same codec.
    #[error("codec mismatch: {0}")]
    CodecMismatch(String),

    /// A delayed grid's pad structure is not the expected staircase.
    #[error("invalid delay layout: {0}")]
    InvalidDelayLayout(String),

    /// Conditions supplied for a task mode do not match its required row.
    #[error("condition mismatch for {mode}: expected {expected}, got {got}")]
    ConditionMismatch {
        mode: String,
        expected: String,
        got: String,
    },

    /// A text condition with no content.
    #[error("empty condition payload")]
    EmptyCondition,

    /// An operation that needs signal energy received silence.
    #[error("silent input: {0}")]
    SilentInput(String),

    /// A degradation asset pool has nothing to draw from.
    #[error("asset missing: {0}")]
    AssetMissing(String),

    /// The file does not start with the expected magic.
    #[error("not a recognized file: bad magic at byte 0")]
    NotATokenFile,

    /// The file parsed up to `offset` and then stopped making sense.
    #[error("corrupt file at byte {offset}: {detail}")]
    CorruptFile { offset: u64, detail: String },

    /// Audio container formats we intentionally do not read.
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn offset_suffix(offset: &Option<u64>) -> String {
    match offset {
        Some(o) => format!(" at byte {o}"),
        None => String::new(),
    }
}

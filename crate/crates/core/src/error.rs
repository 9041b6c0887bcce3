use std::io;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: u64 },

    #[error("vocabulary is empty")]
    EmptyVocabulary,

    #[error("corpus contains no trainable tokens")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {matrix} row {row}")]
    NumericOverflow { matrix: &'static str, row: usize },

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("corrupt co-occurrence matrix: entry ({i}, {j}) has non-positive weight {x}")]
    CorruptMatrix { i: u32, j: u32, x: f64 },

    #[error("co-occurrence matrix has no entries")]
    EmptyMatrix,

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sentence {sentence}, token {position}: {message}")]
    Record {
        sentence: usize,
        position: usize,
        message: String,
    },

    #[error("corpus and token vectors misaligned at sentence {sentence}, position {position}: expected {expected:?}, found {found:?}")]
    Alignment {
        sentence: usize,
        position: usize,
        expected: String,
        found: String,
    },

    #[error("words missing from vocabulary: {}", .0.join(", "))]
    MissingWords(Vec<String>),

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vocabularies differ: {0}")]
    VocabularyMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericOverflow { .. } | Error::Diverged { .. } | Error::UndefinedCorrelation
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

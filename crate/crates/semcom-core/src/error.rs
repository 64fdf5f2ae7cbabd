//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty document: {path}")]
    EmptyDocument { path: PathBuf },

    #[error("corpus contains no words")]
    EmptyCorpus,

    #[error("split needs {requested} sentences but corpus has {available}")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("unknown word {word:?}: sentence was not trimmed with the tokenizer's vocabulary")]
    UnknownWord { word: String },

    #[error("token index {index} out of range for vocab_size {vocab_size}")]
    IndexOutOfRange { index: usize, vocab_size: usize },

    #[error("batch size {batch_size} exceeds dataset rows {rows}")]
    BatchTooLarge { batch_size: usize, rows: usize },

    #[error("invalid model config: {reason}")]
    InvalidModelConfig { reason: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("interference length {interference} does not match model symbol length {model}")]
    InterferenceLength { interference: usize, model: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("corrupt checkpoint: {reason}")]
    CheckpointFormat { reason: String },

    #[error("checkpoint format version {found} not supported (expected {supported})")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("config mismatch: {reason}")]
    ConfigMismatch { reason: String },

    #[error("cannot estimate a probability from an empty similarity list")]
    EmptySimilarities,

    #[error("test inputs have {rows} rows but {references} reference sentences were given")]
    MisalignedReferences { rows: usize, references: usize },

    #[error("sweep over {slots} slots needs at least that many test rows, found {rows}")]
    SlotsExceedRows { slots: usize, rows: usize },

    #[error("bad tokenizer file at line {line}: {reason}")]
    TokenizerFormat { line: usize, reason: String },

    #[error("bad dataset file: {reason}")]
    DatasetFormat { reason: String },

    #[error("bad csv input: missing column {column:?}")]
    CsvSchema { column: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

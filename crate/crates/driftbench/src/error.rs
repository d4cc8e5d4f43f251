use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid platform profile: {0}")]
    InvalidProfile(String),
    #[error("candidate pool must be non-empty")]
    EmptyPool,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("identifier value must be non-empty")]
    EmptyIdentifier,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt buffer store at {path}: {detail}. Delete the file to start from an empty reservoir, or restore it from a backup.")]
    Corrupt { path: String, detail: String },
    #[error("unsupported store version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("not enough distractor candidates: need {needed}, only {available} available across all classes")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("duplicate tag across positives and distractors: {0}")]
    DuplicateTag(String),
    #[error("inconsistent task inputs: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("model call failed after {attempts} attempts: {detail}")]
    CallFailed { attempts: u32, detail: String },
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("could not extract a structured answer: {0}")]
    Extraction(String),
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

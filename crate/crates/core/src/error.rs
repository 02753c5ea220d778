use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("token id {id} out of vocabulary (size {size})")]
    Vocab { id: usize, size: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("training diverged: non-finite value in `{param}`{context}")]
    Divergence { param: String, context: String },
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: line {line}: rationale has {got} entries but the example has {expected} tokens")]
    Annotation {
        path: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("search space of {candidates} mask functions exceeds the limit of {limit}")]
    Feasibility { candidates: u128, limit: u128 },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

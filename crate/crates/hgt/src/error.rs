use std::path::PathBuf;

use hgt_core::dataset::DatasetError;
use hgt_core::kb::KbError;
use hgt_core::model::ModelError;
use hgt_core::tensor::TensorError;
use hgt_core::train::TrainError;
use hgt_core::hypergraph::WalkError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint vocabulary does not match the dataset: {0}")]
    VocabMismatch(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Json { .. } => "json",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::VocabMismatch(_) => "vocab_mismatch",
            Error::Kb(_) => "kb",
            Error::Dataset(_) => "dataset",
            Error::Walk(_) => "walk",
            Error::Model(_) => "model",
            Error::Tensor(_) => "tensor",
            Error::Train(_) => "train",
        }
    }

    /// `{"error": kind, "message": text}` as printed by the CLI on failure.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn json_err(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
    let path = path.into();
    move |source| Error::Json { path, source }
}

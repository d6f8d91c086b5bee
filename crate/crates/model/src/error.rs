use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tensor: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Core(#[from] socq_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<ModelError> for socq_core::Error {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Core(c) => c,
            other => socq_core::Error::Generation(other.to_string()),
        }
    }
}

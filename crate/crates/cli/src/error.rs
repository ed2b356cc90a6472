use thiserror::Error;
use trapal_core::checkpoint::CheckpointError;
use trapal_core::embedding::EmbeddingError;
use trapal_core::features::FeatureError;
use trapal_core::ingest::IngestError;
use trapal_core::pooldir::PoolDirError;
use trapal_core::session::SessionError;
use trapal_core::strategies::StrategyError;
use trapal_core::ShapeError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    PoolDir(#[from] PoolDirError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{path}: {source}")]
    Checkpoint { path: String, source: CheckpointError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
    #[error("{0}")]
    Invalid(String),
}

/// Adapter for `map_err` on I/O results.
pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

//! Pool directories: the on-disk input of a labeling session.
//!
//! ```text
//! <dir>/features.csv          base features of the unlabeled pool
//! <dir>/features.index.csv    row -> crop id
//! <dir>/classes.txt           class table (optional)
//! <dir>/holdout.csv           evaluation features (optional)
//! <dir>/holdout.index.csv
//! <dir>/holdout_labels.csv    crop_id,label for the holdout (optional)
//! <dir>/embedding.json        initial embedding checkpoint (optional)
//! ```
//!
//! Without a checkpoint the embedding is the identity on the base features.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::embedding::EmbeddingNet;
use crate::features::{encode_labels, read_classes, read_labels, FeatureError, FeatureTable};
use crate::scalar::Scalar;
use crate::session::{Holdout, Pool, SessionError};

pub const FEATURES_FILE: &str = "features.csv";
pub const CLASSES_FILE: &str = "classes.txt";
pub const HOLDOUT_FILE: &str = "holdout.csv";
pub const HOLDOUT_LABELS_FILE: &str = "holdout_labels.csv";
pub const EMBEDDING_FILE: &str = "embedding.json";

#[derive(Debug, Error)]
pub enum PoolDirError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{path}: {source}")]
    Checkpoint { path: String, source: CheckpointError },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    Invalid(String),
}

/// Contents of a pool directory.
#[derive(Clone, Debug)]
pub struct PoolData<T> {
    pub pool: Pool<T>,
    pub holdout: Option<FeatureTable<T>>,
    pub classes: Option<Vec<String>>,
    pub embedding: Option<EmbeddingNet<T>>,
    /// Rows of `holdout_labels.csv`, empty when the file is absent.
    pub holdout_labels: Vec<(String, String)>,
}

fn optional(dir: &Path, name: &str) -> Option<PathBuf> {
    let p = dir.join(name);
    p.exists().then_some(p)
}

pub fn load_pool_dir<T: Scalar>(dir: &Path) -> Result<PoolData<T>, PoolDirError> {
    let table = FeatureTable::<T>::read(&dir.join(FEATURES_FILE))?;
    let pool = Pool::new(table.crop_ids, table.features)?;
    let holdout = optional(dir, HOLDOUT_FILE).map(|p| FeatureTable::read(&p)).transpose()?;
    let classes = optional(dir, CLASSES_FILE).map(|p| read_classes(&p)).transpose()?;
    let embedding = match optional(dir, EMBEDDING_FILE) {
        Some(p) => {
            let show = |source| PoolDirError::Checkpoint { path: p.display().to_string(), source };
            let bytes = std::fs::read(&p)
                .map_err(|e| FeatureError::Io { path: p.display().to_string(), source: e })?;
            Some(Checkpoint::from_bytes(&bytes).and_then(|c| c.to_embedding()).map_err(show)?)
        }
        None => None,
    };
    let holdout_labels = optional(dir, HOLDOUT_LABELS_FILE).map(|p| read_labels(&p)).transpose()?.unwrap_or_default();
    if let Some(net) = &embedding {
        if net.input_dim() != pool.features.cols() {
            return Err(PoolDirError::Invalid(format!(
                "embedding expects {} inputs but features have {} columns",
                net.input_dim(),
                pool.features.cols()
            )));
        }
    }
    Ok(PoolData { pool, holdout, classes, embedding, holdout_labels })
}

impl<T: Scalar> PoolData<T> {
    /// The checkpointed embedding, or the identity on the base features.
    pub fn embedding_or_identity(&self) -> EmbeddingNet<T> {
        self.embedding.clone().unwrap_or_else(|| EmbeddingNet::identity(self.pool.features.cols()))
    }

    /// Labels the holdout from `truth` (crop id to label name). Every holdout
    /// crop must appear in `truth`.
    pub fn labeled_holdout(&self, classes: &[String], truth: &[(String, String)]) -> Result<Option<Holdout<T>>, PoolDirError> {
        let Some(table) = &self.holdout else { return Ok(None) };
        let encoded: HashMap<String, usize> = encode_labels(truth, classes)?;
        let labels = table
            .crop_ids
            .iter()
            .map(|c| {
                encoded.get(c).copied().ok_or_else(|| PoolDirError::Invalid(format!("no label for holdout crop {c:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(Holdout { features: table.features.clone(), labels }))
    }
}

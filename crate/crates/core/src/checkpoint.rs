//! Versioned JSON container for trained networks.
//!
//! Weights are stored row-major as decimal numbers that round-trip exactly,
//! so a checkpoint written from `f32` loads into `f32` bit for bit; loading
//! into the other scalar type converts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::MlpClassifier;
use crate::embedding::EmbeddingNet;
use crate::error::ShapeError;
use crate::nn::{Activation, Dense, Mlp};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "trapal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint: {0}")]
    Format(String),
    #[error("expected a {expected} checkpoint, found {found}")]
    Kind { expected: &'static str, found: String },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Embedding,
    Classifier,
}

impl CheckpointKind {
    fn name(self) -> &'static str {
        match self {
            CheckpointKind::Embedding => "embedding",
            CheckpointKind::Classifier => "classifier",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: CheckpointKind,
    pub scalar: String,
    pub activation: Activation,
    pub layers: Vec<LayerRecord>,
    /// Output width: the embedding dimension or the class count.
    pub dim: usize,
    #[serde(default)]
    pub seed_lineage: Vec<u64>,
    /// Class table for classifier checkpoints, index → name.
    #[serde(default)]
    pub classes: Vec<String>,
}

impl Checkpoint {
    fn from_mlp<T: Scalar>(kind: CheckpointKind, mlp: &Mlp<T>) -> Self {
        let layers = mlp
            .layers
            .iter()
            .map(|l| LayerRecord {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                bias: l.bias.iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind,
            scalar: T::type_tag().into(),
            activation: mlp.activation,
            layers,
            dim: mlp.output_dim(),
            seed_lineage: Vec::new(),
            classes: Vec::new(),
        }
    }

    pub fn embedding<T: Scalar>(net: &EmbeddingNet<T>) -> Self {
        Self { seed_lineage: net.seed_lineage.clone(), ..Self::from_mlp(CheckpointKind::Embedding, net.mlp()) }
    }

    pub fn classifier<T: Scalar>(clf: &MlpClassifier<T>, classes: &[String]) -> Self {
        Self { classes: classes.to_vec(), ..Self::from_mlp(CheckpointKind::Classifier, clf.mlp()) }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let c: Checkpoint = serde_json::from_slice(bytes).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(format!("unknown format {:?}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Format(format!("unsupported version {}", c.version)));
        }
        if c.layers.is_empty() {
            return Err(CheckpointError::Format("no layers".into()));
        }
        Ok(c)
    }

    fn to_mlp<T: Scalar>(&self, expected: CheckpointKind) -> Result<Mlp<T>, CheckpointError> {
        if self.kind != expected {
            return Err(CheckpointError::Kind { expected: expected.name(), found: self.kind.name().into() });
        }
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weights: l.weights.iter().map(|&v| T::of(v)).collect(),
                bias: l.bias.iter().map(|&v| T::of(v)).collect(),
            })
            .collect();
        let mlp = Mlp::from_layers(layers, self.activation)?;
        ShapeError::check(self.dim, mlp.output_dim())?;
        if !mlp.is_finite() {
            return Err(CheckpointError::Format("non-finite weights".into()));
        }
        Ok(mlp)
    }

    pub fn to_embedding<T: Scalar>(&self) -> Result<EmbeddingNet<T>, CheckpointError> {
        let mlp = self.to_mlp(CheckpointKind::Embedding)?;
        let mut net = EmbeddingNet::from_layers(mlp.layers, mlp.activation)?;
        net.seed_lineage = self.seed_lineage.clone();
        Ok(net)
    }

    pub fn to_classifier<T: Scalar>(&self) -> Result<MlpClassifier<T>, CheckpointError> {
        let clf = MlpClassifier::from_mlp(self.to_mlp(CheckpointKind::Classifier)?);
        if !self.classes.is_empty() {
            ShapeError::check(self.classes.len(), clf.num_classes())?;
        }
        Ok(clf)
    }
}

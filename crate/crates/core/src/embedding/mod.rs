//! Learned embedding from base crop features into a compact space where
//! same-species crops lie close together.
//!
//! Two objectives are supported: triplet loss with random semi-hard negative
//! mining ([`train_embedding_triplet`]) and softmax cross-entropy through a
//! temporary linear head ([`train_embedding_xent`]). Distances are Euclidean
//! and embeddings are not normalized.

mod triplet;
mod xent;

pub use triplet::{
    classify_triplet, count_possible_triplets, mine_semihard, semihard_candidates, train_embedding_triplet,
    triplet_batch_gradients, triplet_batch_loss, triplet_loss, Candidates, MiningStrategy, Triplet, TripletConfig,
    TripletKind,
};
pub use xent::{train_embedding_xent, xent_batch_gradients, xent_batch_loss, XentConfig};

use serde::{Deserialize, Serialize};
use std::ops::Deref;
use thiserror::Error;

use crate::error::ShapeError;
use crate::matrix::Matrix;
use crate::nn::{Activation, Dense, Mlp};
use crate::scalar::{squared_euclidean, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("training needs at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("no valid (anchor, positive, negative) triplet exists in the labeled set")]
    NoTriplets,
    #[error("{0} labels for {1} feature rows")]
    LabelCount(usize, usize),
    #[error("invalid embedding config: {0}")]
    Config(String),
}

/// Output of the embedding network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingVector<T>(pub Vec<T>);

impl<T> Deref for EmbeddingVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Euclidean distance.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T, ShapeError> {
    ShapeError::check(a.len(), b.len())?;
    Ok(squared_euclidean(a, b).sqrt())
}

/// Labeled feature rows borrowed from a pool or training file.
#[derive(Clone, Copy, Debug)]
pub struct LabeledSamples<'a, T> {
    pub features: &'a Matrix<T>,
    pub labels: &'a [usize],
}

impl<'a, T: Scalar> LabeledSamples<'a, T> {
    pub fn new(features: &'a Matrix<T>, labels: &'a [usize]) -> Result<Self, EmbeddingError> {
        if features.rows() != labels.len() {
            return Err(EmbeddingError::LabelCount(labels.len(), features.rows()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes()];
        for &l in self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn distinct_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }
}

/// Stack of dense layers mapping base features to the embedding space. The
/// embedding is the output of the last (linear) layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingNet<T> {
    pub(crate) mlp: Mlp<T>,
    /// Seeds of the initialization and of every training run, oldest first.
    pub seed_lineage: Vec<u64>,
}

impl<T: Scalar> EmbeddingNet<T> {
    pub const DEFAULT_DIM: usize = 256;
    pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

    /// Random network with He-uniform weights.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, activation: Activation, seed: u64) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        Self { mlp: Mlp::new(&dims, activation, 6f64.sqrt(), seed), seed_lineage: vec![seed] }
    }

    /// Single-layer identity map; the embedding equals the input.
    pub fn identity(dim: usize) -> Self {
        Self {
            mlp: Mlp::from_layers(vec![Dense::identity(dim)], Activation::Identity).expect("square layer"),
            seed_lineage: Vec::new(),
        }
    }

    pub fn from_layers(layers: Vec<Dense<T>>, activation: Activation) -> Result<Self, ShapeError> {
        Ok(Self { mlp: Mlp::from_layers(layers, activation)?, seed_lineage: Vec::new() })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.mlp.layers
    }

    pub fn activation(&self) -> Activation {
        self.mlp.activation
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<T> {
        &mut self.mlp
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.mlp.is_finite()
    }

    pub fn embed(&self, input: &[T]) -> Result<EmbeddingVector<T>, ShapeError> {
        self.mlp.forward(input).map(EmbeddingVector)
    }

    /// Embeds every row.
    pub fn embed_matrix(&self, inputs: &Matrix<T>) -> Result<Matrix<T>, ShapeError> {
        ShapeError::check(self.input_dim(), inputs.cols())?;
        Ok(inputs.map_rows(self.dim(), |r| self.mlp.forward(r).expect("width checked")))
    }
}

/// Which objective shapes the embedding, with its optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum EmbeddingObjective {
    Triplet(TripletConfig),
    CrossEntropy(XentConfig),
}

impl EmbeddingObjective {
    pub fn name(&self) -> &'static str {
        match self {
            EmbeddingObjective::Triplet(_) => "triplet",
            EmbeddingObjective::CrossEntropy(_) => "xent",
        }
    }

    /// Reduced schedule for periodic fine-tuning: a quarter of the epochs
    /// (rounded up) at half the learning rate.
    pub fn fine_tune_schedule(&self) -> Self {
        match self {
            EmbeddingObjective::Triplet(c) => EmbeddingObjective::Triplet(TripletConfig {
                epochs: c.epochs.div_ceil(4),
                learning_rate: c.learning_rate * 0.5,
                ..c.clone()
            }),
            EmbeddingObjective::CrossEntropy(c) => EmbeddingObjective::CrossEntropy(XentConfig {
                epochs: c.epochs.div_ceil(4),
                learning_rate: c.learning_rate * 0.5,
                ..c.clone()
            }),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            EmbeddingObjective::Triplet(c) => EmbeddingObjective::Triplet(TripletConfig { seed, ..c.clone() }),
            EmbeddingObjective::CrossEntropy(c) => EmbeddingObjective::CrossEntropy(XentConfig { seed, ..c.clone() }),
        }
    }

    pub fn train<T: Scalar>(&self, net: &EmbeddingNet<T>, samples: LabeledSamples<'_, T>) -> Result<EmbeddingNet<T>, EmbeddingError> {
        match self {
            EmbeddingObjective::Triplet(c) => train_embedding_triplet(net, samples, c),
            EmbeddingObjective::CrossEntropy(c) => train_embedding_xent(net, samples, c),
        }
    }
}

/// Continues training from the current weights on everything labeled so far,
/// with the reduced fine-tuning schedule.
pub fn fine_tune<T: Scalar>(
    net: &EmbeddingNet<T>,
    samples: LabeledSamples<'_, T>,
    objective: &EmbeddingObjective,
) -> Result<EmbeddingNet<T>, EmbeddingError> {
    objective.fine_tune_schedule().train(net, samples)
}

//! Active learning engine for camera-trap image pools.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`ingest`] thresholds pretrained detector output, marks empty images,
//!    counts animals and cuts fixed-size crops.
//! 2. [`embedding`] maps base crop features into a compact space learned with
//!    triplet or cross-entropy loss.
//! 3. [`session`] drives the labeling loop: a small random seed set, then
//!    batches chosen by one of the [`strategies`], a [`classifier`] retrained
//!    after every batch and periodic embedding fine-tuning.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod checkpoint;
pub mod classifier;
pub mod cluster;
pub mod embedding;
pub mod error;
pub mod features;
pub mod fsio;
pub mod ingest;
pub mod matrix;
pub mod nn;
pub mod pooldir;
pub mod rng;
pub mod scalar;
pub mod session;
pub mod strategies;
pub mod synthetic;

pub use classifier::{MlpClassifier, TrainConfig};
pub use embedding::{EmbeddingNet, EmbeddingObjective, EmbeddingVector, TripletConfig, XentConfig};
pub use error::ShapeError;
pub use matrix::Matrix;
pub use scalar::Scalar;
pub use session::{LoopConfig, Session, SessionError, SessionState};
pub use strategies::{StrategyKind, StrategyParams};

pub type EmbeddingNetF32 = EmbeddingNet<f32>;
pub type EmbeddingNetF64 = EmbeddingNet<f64>;
pub type MlpClassifierF32 = MlpClassifier<f32>;
pub type MlpClassifierF64 = MlpClassifier<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type SessionF32 = Session<f32>;
pub type SessionF64 = Session<f64>;

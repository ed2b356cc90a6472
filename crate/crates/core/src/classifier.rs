//! One-hidden-layer softmax classifier over embedded features, retrained at
//! every active-learning step.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::LabeledSamples;
use crate::error::ShapeError;
use crate::nn::{softmax, Activation, Gradients, Mlp, Sgd, Trace};
use crate::rng::seeded;
use crate::scalar::Scalar;

/// Probabilities are floored at this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{0} labels for {1} feature rows")]
    LabelCount(usize, usize),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weights start uniform in `±init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, epochs: 15, batch_size: 32, seed: 0, init_scale: 6f64.sqrt() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ClassifierError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ClassifierError::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpClassifier<T> {
    pub(crate) mlp: Mlp<T>,
}

impl<T: Scalar> MlpClassifier<T> {
    pub const DEFAULT_HIDDEN: usize = 100;

    pub fn new(input_dim: usize, hidden: usize, num_classes: usize, init_scale: f64, seed: u64) -> Self {
        Self { mlp: Mlp::new(&[input_dim, hidden, num_classes], Activation::Relu, init_scale, seed) }
    }

    pub fn from_mlp(mlp: Mlp<T>) -> Self {
        Self { mlp }
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

    pub fn num_classes(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.mlp.is_finite()
    }

    pub fn predict_proba(&self, feature: &[T]) -> Result<Vec<T>, ShapeError> {
        Ok(softmax(&self.mlp.forward(feature)?))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, feature: &[T]) -> Result<usize, ShapeError> {
        Ok(argmax(&self.predict_proba(feature)?))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `-ln(max(probs[true_label], 1e-12))`
pub fn cross_entropy<T: Scalar>(probs: &[T], true_label: usize) -> T {
    -probs[true_label].max(T::of(PROB_FLOOR)).ln()
}

fn check_samples<T: Scalar>(clf: &MlpClassifier<T>, samples: &LabeledSamples<'_, T>) -> Result<(), ClassifierError> {
    if samples.features.rows() != samples.labels.len() {
        return Err(ClassifierError::LabelCount(samples.labels.len(), samples.features.rows()));
    }
    ShapeError::check(clf.input_dim(), samples.features.cols())?;
    let k = clf.num_classes();
    if let Some(&label) = samples.labels.iter().find(|&&l| l >= k) {
        return Err(ClassifierError::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

fn accumulate<T: Scalar>(clf: &MlpClassifier<T>, traces: &[Trace<T>], labels: &[usize]) -> (T, Gradients<T>) {
    let scale = T::one() / T::of(traces.len().max(1) as f64);
    let mut grads = Gradients::zeros_like(&clf.mlp);
    let mut total = T::zero();
    for (trace, &label) in traces.iter().zip(labels) {
        let mut delta = softmax(trace.output());
        total += cross_entropy(&delta, label);
        delta[label] -= T::one();
        delta.iter_mut().for_each(|d| *d *= scale);
        clf.mlp.backward(trace, &delta, &mut grads);
    }
    (total * scale, grads)
}

/// Mean cross-entropy over the samples.
pub fn classifier_batch_loss<T: Scalar>(clf: &MlpClassifier<T>, samples: LabeledSamples<'_, T>) -> T {
    let total: T = samples
        .features
        .iter_rows()
        .zip(samples.labels)
        .map(|(r, &l)| cross_entropy(&clf.predict_proba(r).expect("feature width"), l))
        .sum();
    total / T::of(samples.len().max(1) as f64)
}

/// Mean cross-entropy and its gradient with respect to every parameter.
pub fn classifier_batch_gradients<T: Scalar>(clf: &MlpClassifier<T>, samples: LabeledSamples<'_, T>) -> (T, Gradients<T>) {
    let traces: Vec<Trace<T>> = samples
        .features
        .iter_rows()
        .map(|r| clf.mlp.forward_trace(r).expect("feature width"))
        .collect();
    accumulate(clf, &traces, samples.labels)
}

/// Mini-batch gradient descent on mean cross-entropy, starting from `clf`.
pub fn train_classifier<T: Scalar>(
    clf: &MlpClassifier<T>,
    samples: LabeledSamples<'_, T>,
    cfg: &TrainConfig,
) -> Result<MlpClassifier<T>, ClassifierError> {
    if samples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    check_samples(clf, &samples)?;
    cfg.validate()?;
    let mut out = clf.clone();
    let mut rng = seeded(cfg.seed);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut traces = Vec::with_capacity(cfg.batch_size);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            traces.clear();
            labels.clear();
            for &i in batch {
                traces.push(out.mlp.forward_trace(samples.features.row(i)).expect("width checked"));
                labels.push(samples.labels[i]);
            }
            let (_, grads) = accumulate(&out, &traces, &labels);
            opt.step(&mut out.mlp, &grads);
        }
    }
    Ok(out)
}

/// Fraction of holdout rows whose argmax prediction equals the label.
pub fn evaluate_accuracy<T: Scalar>(clf: &MlpClassifier<T>, holdout: LabeledSamples<'_, T>) -> Result<f64, ClassifierError> {
    if holdout.is_empty() {
        return Err(ClassifierError::EmptyHoldout);
    }
    check_samples(clf, &holdout)?;
    let hits = holdout
        .features
        .iter_rows()
        .zip(holdout.labels)
        .filter(|(r, &l)| clf.predict(r).expect("width checked") == l)
        .count();
    Ok(hits as f64 / holdout.len() as f64)
}

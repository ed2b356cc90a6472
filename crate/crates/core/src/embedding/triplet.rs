use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingNet, LabeledSamples};
use crate::matrix::Matrix;
use crate::nn::{Gradients, Sgd, Trace};
use crate::rng::seeded;
use crate::scalar::{squared_euclidean, Scalar};

/// Indices of anchor, positive and negative within one labeled set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripletKind {
    /// `d_an >= d_ap + margin`: zero loss.
    Easy,
    /// `d_ap < d_an < d_ap + margin`
    SemiHard,
    /// `d_an <= d_ap`
    Hard,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningStrategy {
    /// Uniform semi-hard negative, falling back to a uniform hard negative.
    #[default]
    RandomSemiHard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletConfig {
    pub margin: f64,
    pub mining: MiningStrategy,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            mining: MiningStrategy::RandomSemiHard,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 20,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(EmbeddingError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(EmbeddingError::Config(format!("learning rate {} is negative", self.learning_rate)));
        }
        if self.batch_size < 2 {
            return Err(EmbeddingError::Config("triplet batches need at least two samples".into()));
        }
        Ok(())
    }
}

/// `max(d_ap - d_an + margin, 0)`, evaluated as `(d_ap + margin) - d_an` so
/// the loss is zero exactly when [`classify_triplet`] says `Easy`.
#[inline]
pub fn triplet_loss<T: Scalar>(d_ap: T, d_an: T, margin: T) -> T {
    ((d_ap + margin) - d_an).max(T::zero())
}

#[inline]
pub fn classify_triplet<T: Scalar>(d_ap: T, d_an: T, margin: T) -> TripletKind {
    if d_an <= d_ap {
        TripletKind::Hard
    } else if d_an < d_ap + margin {
        TripletKind::SemiHard
    } else {
        TripletKind::Easy
    }
}

/// Number of ordered `(anchor, positive, negative)` triplets:
/// `sum_c n_c (n_c - 1) (N - n_c)`.
pub fn count_possible_triplets(class_counts: &[u64]) -> u128 {
    let total: u128 = class_counts.iter().map(|&c| u128::from(c)).sum();
    class_counts
        .iter()
        .map(|&c| {
            let c = u128::from(c);
            c * c.saturating_sub(1) * (total - c)
        })
        .sum()
}

/// Negatives that are semi-hard or hard for one `(anchor, positive)` pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Candidates {
    pub semi_hard: Vec<usize>,
    pub hard: Vec<usize>,
}

pub fn semihard_candidates<T: Scalar>(
    anchor: usize,
    positive: usize,
    labels: &[usize],
    embeddings: &Matrix<T>,
    margin: T,
) -> Candidates {
    let a = embeddings.row(anchor);
    let d_ap = squared_euclidean(a, embeddings.row(positive)).sqrt();
    let mut out = Candidates::default();
    for (n, &label) in labels.iter().enumerate() {
        if label == labels[anchor] {
            continue;
        }
        let d_an = squared_euclidean(a, embeddings.row(n)).sqrt();
        match classify_triplet(d_ap, d_an, margin) {
            TripletKind::SemiHard => out.semi_hard.push(n),
            TripletKind::Hard => out.hard.push(n),
            TripletKind::Easy => {}
        }
    }
    out
}

/// Draws a positive uniformly from the anchor's class, then a uniform
/// semi-hard negative for that pair, falling back to a uniform hard one.
/// Returns `None` when the anchor has no positive or the pair has no
/// semi-hard or hard negative. Easy triplets are never returned.
pub fn mine_semihard<T: Scalar, R: Rng + ?Sized>(
    anchor: usize,
    labels: &[usize],
    embeddings: &Matrix<T>,
    margin: T,
    rng: &mut R,
) -> Option<Triplet> {
    let positives: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| i != anchor && l == labels[anchor])
        .map(|(i, _)| i)
        .collect();
    let &positive = positives.choose(rng)?;
    let cands = semihard_candidates(anchor, positive, labels, embeddings, margin);
    let pool = if cands.semi_hard.is_empty() { &cands.hard } else { &cands.semi_hard };
    let &negative = pool.choose(rng)?;
    Some(Triplet { anchor, positive, negative })
}

fn mean_triplet_objective<T: Scalar>(
    traces: &[Trace<T>],
    triplets: &[Triplet],
    margin: T,
    mut grads_out: Option<&mut [Vec<T>]>,
) -> T {
    if triplets.is_empty() {
        return T::zero();
    }
    let scale = T::one() / T::of(triplets.len() as f64);
    let mut total = T::zero();
    for t in triplets {
        let fa = traces[t.anchor].output();
        let fp = traces[t.positive].output();
        let fn_ = traces[t.negative].output();
        let d_ap = squared_euclidean(fa, fp).sqrt();
        let d_an = squared_euclidean(fa, fn_).sqrt();
        let loss = triplet_loss(d_ap, d_an, margin);
        total += loss;
        if loss <= T::zero() {
            continue;
        }
        let Some(g) = grads_out.as_deref_mut() else { continue };
        // d d(u,v) / du = (u - v) / d(u,v); taken as zero at coincident points.
        if d_ap > T::zero() {
            let c = scale / d_ap;
            for k in 0..fa.len() {
                let diff = (fa[k] - fp[k]) * c;
                g[t.anchor][k] += diff;
                g[t.positive][k] -= diff;
            }
        }
        if d_an > T::zero() {
            let c = scale / d_an;
            for k in 0..fa.len() {
                let diff = (fa[k] - fn_[k]) * c;
                g[t.anchor][k] -= diff;
                g[t.negative][k] += diff;
            }
        }
    }
    total * scale
}

/// Mean triplet loss of `triplets` (indices into `features`).
pub fn triplet_batch_loss<T: Scalar>(net: &EmbeddingNet<T>, features: &Matrix<T>, triplets: &[Triplet], margin: T) -> T {
    let traces: Vec<Trace<T>> = features.iter_rows().map(|r| net.mlp.forward_trace(r).expect("feature width")).collect();
    mean_triplet_objective(&traces, triplets, margin, None)
}

/// Gradient of [`triplet_batch_loss`] with respect to every network parameter.
pub fn triplet_batch_gradients<T: Scalar>(
    net: &EmbeddingNet<T>,
    features: &Matrix<T>,
    triplets: &[Triplet],
    margin: T,
) -> (T, Gradients<T>) {
    let traces: Vec<Trace<T>> = features.iter_rows().map(|r| net.mlp.forward_trace(r).expect("feature width")).collect();
    accumulate(net, &traces, triplets, margin)
}

fn accumulate<T: Scalar>(net: &EmbeddingNet<T>, traces: &[Trace<T>], triplets: &[Triplet], margin: T) -> (T, Gradients<T>) {
    let dim = net.dim();
    let mut out_grads = vec![vec![T::zero(); dim]; traces.len()];
    let loss = mean_triplet_objective(traces, triplets, margin, Some(&mut out_grads));
    let mut grads = Gradients::zeros_like(&net.mlp);
    for (trace, g) in traces.iter().zip(&out_grads) {
        if g.iter().any(|v| *v != T::zero()) {
            net.mlp.backward(trace, g, &mut grads);
        }
    }
    (loss, grads)
}

/// Mini-batch gradient descent on the mean triplet loss. Each batch is a
/// random slice of the labeled set; every sample in it serves as an anchor
/// and gets one mined triplet from within the batch.
pub fn train_embedding_triplet<T: Scalar>(
    net: &EmbeddingNet<T>,
    samples: LabeledSamples<'_, T>,
    cfg: &TripletConfig,
) -> Result<EmbeddingNet<T>, EmbeddingError> {
    cfg.validate()?;
    let classes = samples.distinct_classes();
    if classes < 2 {
        return Err(EmbeddingError::TooFewClasses(classes));
    }
    if count_possible_triplets(&samples.class_counts()) == 0 {
        return Err(EmbeddingError::NoTriplets);
    }
    crate::error::ShapeError::check(net.input_dim(), samples.features.cols())?;

    let mut net = net.clone();
    net.seed_lineage.push(cfg.seed);
    if cfg.epochs == 0 || cfg.learning_rate == 0.0 {
        return Ok(net);
    }
    let margin = T::of(cfg.margin);
    let mut rng = seeded(cfg.seed);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let traces: Vec<Trace<T>> = batch
                .iter()
                .map(|&i| net.mlp.forward_trace(samples.features.row(i)).expect("feature width"))
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| samples.labels[i]).collect();
            let emb = Matrix::from_rows(net.dim(), traces.iter().map(|t| t.output())).expect("uniform width");
            let triplets: Vec<Triplet> = (0..batch.len())
                .filter_map(|a| mine_semihard(a, &labels, &emb, margin, &mut rng))
                .collect();
            if triplets.is_empty() {
                continue;
            }
            let (_, grads) = accumulate(&net, &traces, &triplets, margin);
            opt.step(&mut net.mlp, &grads);
        }
    }
    Ok(net)
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingNet, LabeledSamples};
use crate::nn::{softmax, Activation, Dense, Gradients, Mlp, Sgd, Trace};
use crate::rng::{derive_seed, seeded};
use crate::scalar::{axpy, Scalar};

const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XentConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for XentConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, epochs: 20, batch_size: 64, seed: 0 }
    }
}

fn head_forward<T: Scalar>(head: &Dense<T>, emb: &[T]) -> Vec<T> {
    let mut z = Vec::with_capacity(head.out_dim);
    head.forward_into(emb, &mut z);
    z
}

/// Mean cross-entropy of `net` followed by the linear `head`.
pub fn xent_batch_loss<T: Scalar>(net: &EmbeddingNet<T>, head: &Dense<T>, samples: LabeledSamples<'_, T>) -> T {
    let floor = T::of(PROB_FLOOR);
    let mut total = T::zero();
    for (row, &label) in samples.features.iter_rows().zip(samples.labels) {
        let emb = net.mlp.forward(row).expect("feature width");
        let p = softmax(&head_forward(head, &emb));
        total -= p[label].max(floor).ln();
    }
    total / T::of(samples.len().max(1) as f64)
}

/// Gradients of [`xent_batch_loss`] for the network and the head.
pub fn xent_batch_gradients<T: Scalar>(
    net: &EmbeddingNet<T>,
    head: &Dense<T>,
    samples: LabeledSamples<'_, T>,
) -> (T, Gradients<T>, Dense<T>) {
    let traces: Vec<Trace<T>> = samples
        .features
        .iter_rows()
        .map(|r| net.mlp.forward_trace(r).expect("feature width"))
        .collect();
    accumulate(net, head, &traces, samples.labels)
}

fn accumulate<T: Scalar>(net: &EmbeddingNet<T>, head: &Dense<T>, traces: &[Trace<T>], labels: &[usize]) -> (T, Gradients<T>, Dense<T>) {
    let floor = T::of(PROB_FLOOR);
    let scale = T::one() / T::of(traces.len().max(1) as f64);
    let mut grads = Gradients::zeros_like(&net.mlp);
    let mut head_grad = Dense::zeros(head.in_dim, head.out_dim);
    let mut total = T::zero();
    for (trace, &label) in traces.iter().zip(labels) {
        let emb = trace.output();
        let mut delta = softmax(&head_forward(head, emb));
        total -= delta[label].max(floor).ln();
        delta[label] -= T::one();
        let mut grad_emb = vec![T::zero(); head.in_dim];
        for (o, d) in delta.iter_mut().enumerate() {
            *d *= scale;
            head_grad.bias[o] += *d;
            axpy(*d, emb, &mut head_grad.weights[o * head.in_dim..(o + 1) * head.in_dim]);
            axpy(*d, head.weight_row(o), &mut grad_emb);
        }
        net.mlp.backward(trace, &grad_emb, &mut grads);
    }
    (total * scale, grads, head_grad)
}

/// Trains `net` jointly with a fresh linear softmax head, then discards the
/// head. The network output (the layer below the head) is the embedding.
pub fn train_embedding_xent<T: Scalar>(
    net: &EmbeddingNet<T>,
    samples: LabeledSamples<'_, T>,
    cfg: &XentConfig,
) -> Result<EmbeddingNet<T>, EmbeddingError> {
    let classes = samples.distinct_classes();
    if classes < 2 {
        return Err(EmbeddingError::TooFewClasses(classes));
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate < 0.0 {
        return Err(EmbeddingError::Config("batch size must be positive and learning rate non-negative".into()));
    }
    crate::error::ShapeError::check(net.input_dim(), samples.features.cols())?;
    let mut net = net.clone();
    net.seed_lineage.push(cfg.seed);
    if cfg.epochs == 0 || cfg.learning_rate == 0.0 {
        return Ok(net);
    }
    let mut rng = seeded(cfg.seed);
    let mut head_rng = seeded(derive_seed(cfg.seed, "xent-head", 0));
    let mut head = Dense::<T>::uniform(net.dim(), samples.num_classes(), 1.0, &mut head_rng);
    // The head is optimized as a one-layer MLP so it can share the optimizer.
    let mut head_mlp = Mlp::from_layers(vec![head.clone()], Activation::Identity).expect("single layer");
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut head_opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let traces: Vec<Trace<T>> = batch
                .iter()
                .map(|&i| net.mlp.forward_trace(samples.features.row(i)).expect("feature width"))
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| samples.labels[i]).collect();
            let (_, grads, head_grad) = accumulate(&net, &head, &traces, &labels);
            opt.step(&mut net.mlp, &grads);
            head_opt.step(&mut head_mlp, &Gradients { layers: vec![head_grad] });
            head = head_mlp.layers[0].clone();
        }
    }
    Ok(net)
}

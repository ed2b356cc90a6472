//! Fully connected layers with hand-written backpropagation.
//!
//! Both the embedding network and the species classifier are stacks of
//! [`Dense`] layers. Hidden layers apply the configured [`Activation`]; the
//! last layer is always linear.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ShapeError;
use crate::rng::seeded;
use crate::scalar::{axpy, dot, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Identity => T::one(),
        }
    }
}

/// One affine layer. `weights` is `out_dim × in_dim`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Uniform init in `±scale / sqrt(fan_in)`, zero bias.
    pub fn uniform(in_dim: usize, out_dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let limit = scale / (in_dim.max(1) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| T::of(rng.random_range(-limit..=limit)))
            .collect();
        Self { in_dim, out_dim, weights, bias: vec![T::zero(); out_dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut layer = Self::zeros(dim, dim);
        for i in 0..dim {
            layer.weights[i * dim + i] = T::one();
        }
        layer
    }

    #[inline]
    pub fn weight_row(&self, o: usize) -> &[T] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn forward_into(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.out_dim).map(|o| dot(self.weight_row(o), x) + self.bias[o]));
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Per-sample record of a forward pass, needed for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// Input to each layer, plus the final output as the last element.
    pub activations: Vec<Vec<T>>,
    /// Pre-activation of each layer.
    pub pre: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("trace has at least the input")
    }
}

/// Multi-layer perceptron; hidden layers use `activation`, the last layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub activation: Activation,
}

impl<T: Scalar> Mlp<T> {
    /// `dims` lists every width from input to output, so `dims.len() >= 2`.
    pub fn new(dims: &[usize], activation: Activation, init_scale: f64, seed: u64) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let mut rng = seeded(seed);
        let layers = dims
            .windows(2)
            .map(|w| Dense::uniform(w[0], w[1], init_scale, &mut rng))
            .collect();
        Self { layers, activation }
    }

    pub fn from_layers(layers: Vec<Dense<T>>, activation: Activation) -> Result<Self, ShapeError> {
        for pair in layers.windows(2) {
            ShapeError::check(pair[0].out_dim, pair[1].in_dim)?;
        }
        for l in &layers {
            ShapeError::check(l.in_dim * l.out_dim, l.weights.len())?;
            ShapeError::check(l.out_dim, l.bias.len())?;
        }
        assert!(!layers.is_empty(), "an MLP needs at least one layer");
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, ShapeError> {
        ShapeError::check(self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[T]) -> Result<Trace<T>, ShapeError> {
        ShapeError::check(self.input_dim(), x.len())?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.forward_into(&activations[i], &mut z);
            let a = if i == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            activations.push(a);
        }
        Ok(Trace { activations, pre })
    }

    /// Accumulates parameter gradients for one sample into `grads` given
    /// `d loss / d output`, and returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], grads: &mut Gradients<T>) -> Vec<T> {
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i != last {
                for (d, (&z, &a)) in delta.iter_mut().zip(trace.pre[i].iter().zip(&trace.activations[i + 1])) {
                    *d *= self.activation.derivative(z, a);
                }
            }
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            let mut grad_in = vec![T::zero(); layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                g.bias[o] += d;
                axpy(d, input, &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim]);
                axpy(d, layer.weight_row(o), &mut grad_in);
            }
            delta = grad_in;
        }
        delta
    }
}

/// Gradient buffers shaped like an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self { layers: mlp.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect() }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| *v == T::zero()))
    }

    /// Flattened view in the same order as [`param_mut`].
    pub fn flat(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }
}

/// Mutable access to the `k`-th parameter in flattened order
/// (layer by layer, weights then bias). Used by finite-difference checks.
pub fn param_mut<T: Scalar>(mlp: &mut Mlp<T>, mut k: usize) -> &mut T {
    for l in &mut mlp.layers {
        let n = l.weights.len();
        if k < n {
            return &mut l.weights[k];
        }
        k -= n;
        if k < l.bias.len() {
            return &mut l.bias[k];
        }
        k -= l.bias.len();
    }
    panic!("parameter index out of range");
}

/// SGD with classical momentum. Momentum 0 is plain gradient descent.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    lr: T,
    momentum: T,
    velocity: Option<Gradients<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self { lr: T::of(learning_rate), momentum: T::of(momentum), velocity: None }
    }

    pub fn step(&mut self, mlp: &mut Mlp<T>, grads: &Gradients<T>) {
        if self.lr == T::zero() {
            return;
        }
        if self.momentum == T::zero() {
            for (l, g) in mlp.layers.iter_mut().zip(&grads.layers) {
                axpy(-self.lr, &g.weights, &mut l.weights);
                axpy(-self.lr, &g.bias, &mut l.bias);
            }
            return;
        }
        let vel = self.velocity.get_or_insert_with(|| Gradients::zeros_like(mlp));
        for ((l, g), v) in mlp.layers.iter_mut().zip(&grads.layers).zip(vel.layers.iter_mut()) {
            for (vi, &gi) in v.weights.iter_mut().zip(&g.weights).chain(v.bias.iter_mut().zip(&g.bias)) {
                *vi = self.momentum * *vi + gi;
            }
            axpy(-self.lr, &v.weights, &mut l.weights);
            axpy(-self.lr, &v.bias, &mut l.bias);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

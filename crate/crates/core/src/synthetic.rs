//! Seeded Gaussian-mixture pools for experiments and tests.
//!
//! Every component of the mixture is an isotropic Gaussian. Components sit
//! on scaled coordinate axes so that centres on distinct axes are exactly
//! `separation · sigma` apart. A class owns one or more components, either
//! each on its own axis or scattered around a shared class axis, and class
//! frequencies may decay geometrically.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModeLayout {
    /// Every component on its own axis; needs `dim >= classes * modes_per_class`.
    Axes,
    /// Components of a class drawn around the class axis with this standard
    /// deviation, in units of `sigma`.
    Scattered { spread: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureSpec {
    pub classes: usize,
    /// Must be at least `classes`.
    pub dim: usize,
    /// Distance between axis-placed centres in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub modes_per_class: usize,
    pub layout: ModeLayout,
    /// Frequency ratio between consecutive classes; 1 is balanced.
    pub imbalance: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self { classes: 10, dim: 16, separation: 2.0, sigma: 1.0, modes_per_class: 1, layout: ModeLayout::Axes, imbalance: 1.0 }
    }
}

/// A fixed mixture: mode centres and class weights drawn once from a seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub spec: MixtureSpec,
    /// `classes × modes_per_class` rows, class-major.
    pub mode_centres: Matrix<f64>,
    pub class_weights: Vec<f64>,
}

impl Mixture {
    pub fn new(spec: MixtureSpec, seed: u64) -> Self {
        assert!(spec.classes >= 1 && spec.modes_per_class >= 1, "need at least one class and mode");
        let components = spec.classes * spec.modes_per_class;
        let axes = match spec.layout {
            ModeLayout::Axes => components,
            ModeLayout::Scattered { .. } => spec.classes,
        };
        assert!(spec.dim >= axes, "dim {} < {axes} axes", spec.dim);
        assert!(spec.sigma > 0.0 && spec.imbalance > 0.0, "sigma and imbalance must be positive");
        let radius = spec.separation * spec.sigma / 2f64.sqrt();
        let mut centres = Matrix::zeros(components, spec.dim);
        match spec.layout {
            ModeLayout::Axes => {
                for k in 0..components {
                    centres.row_mut(k)[k] = radius;
                }
            }
            ModeLayout::Scattered { spread } => {
                let spread = Normal::new(0.0, spread * spec.sigma).expect("finite spread");
                let mut rng = seeded(derive_seed(seed, "mixture-modes", 0));
                for c in 0..spec.classes {
                    for m in 0..spec.modes_per_class {
                        let row = centres.row_mut(c * spec.modes_per_class + m);
                        for v in row.iter_mut() {
                            *v = spread.sample(&mut rng);
                        }
                        row[c] += radius;
                    }
                }
            }
        }
        let class_weights = (0..spec.classes).map(|c| spec.imbalance.powi(-(c as i32))).collect();
        Self { spec, mode_centres: centres, class_weights }
    }

    /// Draws `n` labelled points. Different `stream` values give independent
    /// samples from the same mixture.
    pub fn sample<T: Scalar>(&self, n: usize, seed: u64, stream: u64) -> (Matrix<T>, Vec<usize>) {
        let mut rng = seeded(derive_seed(seed, "mixture-sample", stream));
        let class_dist = WeightedIndex::new(&self.class_weights).expect("positive weights");
        let noise = Normal::new(0.0, self.spec.sigma).expect("positive sigma");
        let mut data = Vec::with_capacity(n * self.spec.dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c: usize = class_dist.sample(&mut rng);
            let m = rng.random_range(0..self.spec.modes_per_class);
            let centre = self.mode_centres.row(c * self.spec.modes_per_class + m);
            data.extend(centre.iter().map(|&mu| T::of(mu + noise.sample(&mut rng))));
            labels.push(c);
        }
        (Matrix::from_vec(n, self.spec.dim, data).expect("sized"), labels)
    }
}

//! Query-selection strategies.
//!
//! Every strategy picks `n` distinct unlabeled pool indices given a snapshot
//! of the loop ([`SelectionContext`]). Ties always go to the lowest pool
//! index and every random draw is seeded from the context.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::classifier::MlpClassifier;
use crate::cluster::{average_linkage, kmeans, Dendrogram};
use crate::error::ShapeError;
use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::scalar::{squared_euclidean, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("requested {requested} items but only {available} are unlabeled")]
    TooMany { requested: usize, available: usize },
    #[error("strategy {0} needs a trained classifier")]
    NeedsClassifier(StrategyKind),
    #[error("labeled/unlabeled partition is invalid: {0}")]
    Partition(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("unknown strategy {given:?}; valid names: {valid}")]
    UnknownName { given: String, valid: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Confidence,
    Margin,
    Entropy,
    InformativeDiverse,
    MarginClusterMean,
    KCenter,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Random,
        StrategyKind::Confidence,
        StrategyKind::Margin,
        StrategyKind::Entropy,
        StrategyKind::InformativeDiverse,
        StrategyKind::MarginClusterMean,
        StrategyKind::KCenter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Confidence => "confidence",
            StrategyKind::Margin => "margin",
            StrategyKind::Entropy => "entropy",
            StrategyKind::InformativeDiverse => "informative_diverse",
            StrategyKind::MarginClusterMean => "margin_cluster_mean",
            StrategyKind::KCenter => "k_center",
        }
    }

    pub fn needs_classifier(self) -> bool {
        !matches!(self, StrategyKind::Random | StrategyKind::KCenter)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let norm = if norm == "kcenter" { "k_center".to_owned() } else { norm };
        StrategyKind::ALL.into_iter().find(|k| k.name() == norm).ok_or_else(|| StrategyError::UnknownName {
            given: s.to_owned(),
            valid: StrategyKind::ALL.map(|k| k.name()).join(", "),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyParams {
    /// Items whose top-2 probability gap is below this form the margin region.
    pub margin_threshold: f64,
    /// Cluster count for informative-diverse; `None` means `min(20, ceil(sqrt(pool)))`.
    pub clusters: Option<usize>,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self { margin_threshold: 0.2, clusters: None }
    }
}

/// Read-only snapshot the strategies select from.
#[derive(Clone, Copy)]
pub struct SelectionContext<'a, T> {
    pub embeddings: &'a Matrix<T>,
    pub labeled: &'a [usize],
    pub unlabeled: &'a [usize],
    pub classifier: Option<&'a MlpClassifier<T>>,
    pub seed: u64,
    pub params: StrategyParams,
    /// Cached hierarchy over `embeddings`; computed on demand when absent.
    pub dendrogram: Option<&'a Dendrogram>,
}

impl<'a, T: Scalar> SelectionContext<'a, T> {
    /// Checks that `labeled` and `unlabeled` are sorted, disjoint and together
    /// cover every pool row.
    pub fn new(
        embeddings: &'a Matrix<T>,
        labeled: &'a [usize],
        unlabeled: &'a [usize],
        classifier: Option<&'a MlpClassifier<T>>,
        seed: u64,
        params: StrategyParams,
    ) -> Result<Self, StrategyError> {
        let n = embeddings.rows();
        let sorted = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(labeled) || !sorted(unlabeled) {
            return Err(StrategyError::Partition("index lists must be strictly increasing".into()));
        }
        if labeled.len() + unlabeled.len() != n {
            return Err(StrategyError::Partition(format!(
                "{} labeled + {} unlabeled != pool of {n}",
                labeled.len(),
                unlabeled.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in labeled.iter().chain(unlabeled) {
            if i >= n || seen[i] {
                return Err(StrategyError::Partition(format!("index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        if let Some(clf) = classifier {
            ShapeError::check(clf.input_dim(), embeddings.cols())?;
        }
        Ok(Self { embeddings, labeled, unlabeled, classifier, seed, params, dendrogram: None })
    }

    pub fn with_dendrogram(mut self, d: &'a Dendrogram) -> Self {
        self.dendrogram = Some(d);
        self
    }

    fn check_n(&self, n: usize) -> Result<(), StrategyError> {
        if n > self.unlabeled.len() {
            Err(StrategyError::TooMany { requested: n, available: self.unlabeled.len() })
        } else {
            Ok(())
        }
    }

    fn probabilities(&self, kind: StrategyKind) -> Result<Vec<Vec<T>>, StrategyError> {
        let clf = self.classifier.ok_or(StrategyError::NeedsClassifier(kind))?;
        Ok(self
            .unlabeled
            .iter()
            .map(|&i| clf.predict_proba(self.embeddings.row(i)).expect("width checked in new"))
            .collect())
    }
}

/// Chosen pool indices in selection order, with the score that ranked each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl Selection {
    fn push(&mut self, index: usize, score: f64) {
        self.indices.push(index);
        self.scores.push(score);
    }
}

pub fn select<T: Scalar>(kind: StrategyKind, ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    match kind {
        StrategyKind::Random => select_random(ctx, n),
        StrategyKind::Confidence => select_confidence(ctx, n),
        StrategyKind::Margin => select_margin(ctx, n),
        StrategyKind::Entropy => select_entropy(ctx, n),
        StrategyKind::InformativeDiverse => select_informative_diverse(ctx, n),
        StrategyKind::MarginClusterMean => select_margin_cluster_mean(ctx, n),
        StrategyKind::KCenter => select_kcenter(ctx, n),
    }
}

/// Uniform sample without replacement. Scores are the draw order.
pub fn select_random<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    ctx.check_n(n)?;
    let mut rng = seeded(ctx.seed);
    let mut out = Selection::default();
    for (rank, pos) in sample(&mut rng, ctx.unlabeled.len(), n).into_iter().enumerate() {
        out.push(ctx.unlabeled[pos], rank as f64);
    }
    Ok(out)
}

/// Highest class probability.
pub fn confidence_score<T: Scalar>(p: &[T]) -> f64 {
    p.iter().copied().fold(T::neg_infinity(), T::max).as_f64()
}

/// Gap between the two largest class probabilities.
pub fn margin_score<T: Scalar>(p: &[T]) -> f64 {
    let (mut first, mut second) = (T::neg_infinity(), T::neg_infinity());
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if second == T::neg_infinity() {
        return first.as_f64();
    }
    (first - second).as_f64()
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy_score<T: Scalar>(p: &[T]) -> f64 {
    -p.iter().map(|&v| v.as_f64()).filter(|&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

fn rank<T: Scalar>(
    ctx: &SelectionContext<'_, T>,
    kind: StrategyKind,
    n: usize,
    score: fn(&[T]) -> f64,
    ascending: bool,
) -> Result<Selection, StrategyError> {
    ctx.check_n(n)?;
    let probs = ctx.probabilities(kind)?;
    let mut scored: Vec<(usize, f64)> = ctx.unlabeled.iter().zip(&probs).map(|(&i, p)| (i, score(p))).collect();
    scored.sort_by(|a, b| {
        let ord = if ascending { a.1.total_cmp(&b.1) } else { b.1.total_cmp(&a.1) };
        ord.then(a.0.cmp(&b.0))
    });
    let mut out = Selection::default();
    for &(i, s) in scored.iter().take(n) {
        out.push(i, s);
    }
    Ok(out)
}

/// Lowest top-class probability first.
pub fn select_confidence<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    rank(ctx, StrategyKind::Confidence, n, confidence_score::<T>, true)
}

/// Smallest gap between the two most probable classes first.
pub fn select_margin<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    rank(ctx, StrategyKind::Margin, n, margin_score::<T>, true)
}

/// Highest predictive entropy first.
pub fn select_entropy<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    rank(ctx, StrategyKind::Entropy, n, entropy_score::<T>, false)
}

/// Greedy farthest-first coreset selection. Each pick maximizes the distance
/// to the nearest labeled or already selected item; with nothing labeled the
/// first pick is the lowest unlabeled index. Scores are those distances.
pub fn select_kcenter<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    ctx.check_n(n)?;
    let emb = ctx.embeddings;
    // squared distances; the argmax is the same as for Euclidean distance
    let mut min_d: Vec<T> = ctx
        .unlabeled
        .iter()
        .map(|&u| {
            let row = emb.row(u);
            ctx.labeled
                .iter()
                .map(|&l| squared_euclidean(row, emb.row(l)))
                .fold(T::infinity(), T::min)
        })
        .collect();
    let mut taken = vec![false; ctx.unlabeled.len()];
    let mut out = Selection::default();
    for _ in 0..n {
        let mut best = usize::MAX;
        for (pos, &d) in min_d.iter().enumerate() {
            if !taken[pos] && (best == usize::MAX || d > min_d[best]) {
                best = pos;
            }
        }
        taken[best] = true;
        let score = if min_d[best].is_infinite() { 0.0 } else { min_d[best].sqrt().as_f64() };
        let pick = ctx.unlabeled[best];
        out.push(pick, score);
        let row = emb.row(pick);
        for (pos, &u) in ctx.unlabeled.iter().enumerate() {
            let d = squared_euclidean(emb.row(u), row);
            if d < min_d[pos] {
                min_d[pos] = d;
            }
        }
    }
    Ok(out)
}

/// Splits `n` across groups in proportion to `sizes` with largest-remainder
/// rounding; remainder ties go to the larger group, then the lower index.
pub fn largest_remainder_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (n * sizes[a] % total, n * sizes[b] % total);
        rb.cmp(&ra).then(sizes[b].cmp(&sizes[a])).then(a.cmp(&b))
    });
    for &g in order.iter().take(n - assigned) {
        quotas[g] += 1;
    }
    quotas
}

pub fn default_cluster_count(pool: usize) -> usize {
    let root = (pool as f64).sqrt().ceil() as usize;
    root.clamp(1, 20)
}

/// Clusters the whole pool (average linkage), gives each cluster a quota
/// proportional to its size, fills each quota with that cluster's most
/// margin-uncertain unlabeled items, and tops up any shortfall with the most
/// uncertain items left anywhere.
pub fn select_informative_diverse<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    ctx.check_n(n)?;
    let probs = ctx.probabilities(StrategyKind::InformativeDiverse)?;
    let pool = ctx.embeddings.rows();
    let clusters = ctx.params.clusters.unwrap_or_else(|| default_cluster_count(pool)).max(1);
    let owned;
    let dendro = match ctx.dendrogram {
        Some(d) => d,
        None => {
            owned = average_linkage(ctx.embeddings);
            &owned
        }
    };
    let assignment = dendro.cut(clusters);
    let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &c in &assignment {
        sizes[c] += 1;
    }
    let quotas = largest_remainder_quotas(&sizes, n);

    let mut by_margin: Vec<(usize, f64)> = ctx.unlabeled.iter().zip(&probs).map(|(&i, p)| (i, margin_score(p))).collect();
    by_margin.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut filled = vec![0usize; n_clusters];
    let mut taken = vec![false; by_margin.len()];
    let mut per_cluster: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_clusters];
    for (pos, &(i, s)) in by_margin.iter().enumerate() {
        let c = assignment[i];
        if filled[c] < quotas[c] {
            filled[c] += 1;
            taken[pos] = true;
            per_cluster[c].push((i, s));
        }
    }
    let mut out = Selection::default();
    for (i, s) in per_cluster.into_iter().flatten() {
        out.push(i, s);
    }
    for (pos, &(i, s)) in by_margin.iter().enumerate() {
        if out.indices.len() == n {
            break;
        }
        if !taken[pos] {
            out.push(i, s);
        }
    }
    Ok(out)
}

/// Clusters the margin region (gap below the threshold) with k = n Lloyd
/// iterations and returns the region item nearest each centroid. A region
/// with at most `n` items is taken whole and topped up by margin ranking.
pub fn select_margin_cluster_mean<T: Scalar>(ctx: &SelectionContext<'_, T>, n: usize) -> Result<Selection, StrategyError> {
    ctx.check_n(n)?;
    let probs = ctx.probabilities(StrategyKind::MarginClusterMean)?;
    let margins: Vec<f64> = probs.iter().map(|p| margin_score(p)).collect();
    let region: Vec<usize> = (0..ctx.unlabeled.len()).filter(|&pos| margins[pos] < ctx.params.margin_threshold).collect();
    let mut out = Selection::default();
    if region.len() <= n {
        for &pos in &region {
            out.push(ctx.unlabeled[pos], margins[pos]);
        }
        let mut rest: Vec<usize> = (0..ctx.unlabeled.len()).filter(|pos| margins[*pos] >= ctx.params.margin_threshold).collect();
        rest.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
        for pos in rest.into_iter().take(n - region.len()) {
            out.push(ctx.unlabeled[pos], margins[pos]);
        }
        return Ok(out);
    }
    if n == 0 {
        return Ok(out);
    }
    let points = ctx.embeddings.select_rows(&region.iter().map(|&p| ctx.unlabeled[p]).collect::<Vec<_>>());
    let km = kmeans(&points, n, ctx.seed, 100);
    let mut used = vec![false; region.len()];
    for c in km.centroids.iter_rows() {
        let mut best = usize::MAX;
        let mut best_d = T::infinity();
        for (r, row) in points.iter_rows().enumerate() {
            if used[r] {
                continue;
            }
            let d = squared_euclidean(row, c);
            if d < best_d {
                best_d = d;
                best = r;
            }
        }
        used[best] = true;
        out.push(ctx.unlabeled[region[best]], margins[region[best]]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, Mlp};

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert_eq!("k-center".parse::<StrategyKind>().unwrap(), StrategyKind::KCenter);
        match "kcentre".parse::<StrategyKind>() {
            Err(StrategyError::UnknownName { valid, .. }) => assert!(valid.contains("k_center") && valid.contains("random")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quotas_largest_remainder() {
        assert_eq!(largest_remainder_quotas(&[60, 30, 10], 5), vec![3, 2, 0]);
        assert_eq!(largest_remainder_quotas(&[50, 50], 2), vec![1, 1]);
        assert_eq!(largest_remainder_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder_quotas(&[7], 3), vec![3]);
    }

    #[test]
    fn score_functions() {
        assert_eq!(confidence_score(&[0.2f64, 0.7, 0.1]), 0.7);
        assert!((margin_score(&[0.4f64, 0.35, 0.25]) - 0.05).abs() < 1e-12);
        assert!((entropy_score(&[1.0f64 / 3.0; 3]) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(entropy_score(&[0.0f64, 1.0, 0.0]), 0.0);
    }

    fn line(points: &[f64]) -> Matrix<f64> {
        Matrix::from_rows(1, points.iter().map(|p| [*p])).unwrap()
    }

    #[test]
    fn kcenter_hand_traced() {
        let emb = line(&[0.0, 3.0, 10.0]);
        let ctx = SelectionContext::new(&emb, &[0], &[1, 2], None, 0, StrategyParams::default()).unwrap();
        assert_eq!(select_kcenter(&ctx, 1).unwrap().indices, vec![2]);

        let emb = line(&[0.0, 3.0, 10.0, 12.0]);
        let ctx = SelectionContext::new(&emb, &[0], &[1, 2, 3], None, 0, StrategyParams::default()).unwrap();
        let sel = select_kcenter(&ctx, 2).unwrap();
        assert_eq!(sel.indices, vec![3, 1]);
        assert_eq!(sel.scores, vec![12.0, 3.0]);
    }

    #[test]
    fn kcenter_without_labels_starts_at_lowest_index() {
        let emb = line(&[5.0, 0.0, 9.0]);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1, 2], None, 0, StrategyParams::default()).unwrap();
        assert_eq!(select_kcenter(&ctx, 2).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn partition_is_validated() {
        let emb = line(&[0.0, 1.0, 2.0]);
        assert!(SelectionContext::new(&emb, &[0], &[0, 1, 2], None, 0, StrategyParams::default()).is_err());
        assert!(SelectionContext::new(&emb, &[0], &[1], None, 0, StrategyParams::default()).is_err());
        assert!(SelectionContext::new(&emb, &[], &[2, 1, 0], None, 0, StrategyParams::default()).is_err());
    }

    #[test]
    fn too_many_requested() {
        let emb = line(&[0.0, 1.0, 2.0]);
        let ctx = SelectionContext::new(&emb, &[0], &[1, 2], None, 0, StrategyParams::default()).unwrap();
        assert_eq!(select_random(&ctx, 3).unwrap_err(), StrategyError::TooMany { requested: 3, available: 2 });
        assert_eq!(select_kcenter(&ctx, 3).unwrap_err(), StrategyError::TooMany { requested: 3, available: 2 });
    }

    #[test]
    fn random_takes_everything_when_asked() {
        let emb = line(&[0.0, 1.0, 2.0, 3.0]);
        let ctx = SelectionContext::new(&emb, &[1], &[0, 2, 3], None, 8, StrategyParams::default()).unwrap();
        let mut sel = select_random(&ctx, 3).unwrap().indices;
        sel.sort();
        assert_eq!(sel, vec![0, 2, 3]);
        assert_eq!(select_random(&ctx, 2).unwrap(), select_random(&ctx, 2).unwrap());
    }

    #[test]
    fn uncertainty_needs_classifier() {
        let emb = line(&[0.0, 1.0]);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1], None, 0, StrategyParams::default()).unwrap();
        assert_eq!(select_margin(&ctx, 1).unwrap_err(), StrategyError::NeedsClassifier(StrategyKind::Margin));
    }

    /// Classifier whose softmax output equals the normalized input when the
    /// input rows are log-probabilities: identity hidden layer is impossible
    /// with ReLU, so feed non-negative values and use a linear readout.
    fn passthrough_classifier(k: usize) -> MlpClassifier<f64> {
        let mlp = Mlp::from_layers(vec![Dense::identity(k), Dense::identity(k)], Activation::Relu).unwrap();
        MlpClassifier::from_mlp(mlp)
    }

    fn logits_of(probs: &[&[f64]]) -> Matrix<f64> {
        // ln p shifted to be non-negative so it survives the ReLU.
        Matrix::from_rows(probs[0].len(), probs.iter().map(|p| p.iter().map(|v| v.ln() + 50.0).collect::<Vec<_>>())).unwrap()
    }

    #[test]
    fn confidence_picks_least_confident() {
        let emb = logits_of(&[&[0.9, 0.1], &[0.55, 0.45]]);
        let clf = passthrough_classifier(2);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1], Some(&clf), 0, StrategyParams::default()).unwrap();
        assert_eq!(select_confidence(&ctx, 1).unwrap().indices, vec![1]);
    }

    #[test]
    fn margin_prefers_small_gap() {
        let emb = logits_of(&[&[0.9, 0.05, 0.05], &[0.4, 0.35, 0.25]]);
        let clf = passthrough_classifier(3);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1], Some(&clf), 0, StrategyParams::default()).unwrap();
        assert_eq!(select_margin(&ctx, 1).unwrap().indices, vec![1]);
    }

    #[test]
    fn identical_probabilities_tie_to_lowest_index() {
        let emb = logits_of(&[&[0.6, 0.4], &[0.6, 0.4], &[0.6, 0.4], &[0.6, 0.4]]);
        let clf = passthrough_classifier(2);
        let ctx = SelectionContext::new(&emb, &[0], &[1, 2, 3], Some(&clf), 0, StrategyParams::default()).unwrap();
        assert_eq!(select_confidence(&ctx, 2).unwrap().indices, vec![1, 2]);
        assert_eq!(select_entropy(&ctx, 2).unwrap().indices, vec![1, 2]);
    }

    #[test]
    fn entropy_selects_uniform_first_and_one_hot_last() {
        let emb = logits_of(&[&[1.0 - 2e-20, 1e-20, 1e-20], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], &[0.5, 0.3, 0.2]]);
        let clf = passthrough_classifier(3);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1, 2], Some(&clf), 0, StrategyParams::default()).unwrap();
        let sel = select_entropy(&ctx, 3).unwrap();
        assert_eq!(sel.indices, vec![1, 2, 0]);
        assert!((sel.scores[0] - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn margin_cluster_mean_fallbacks() {
        // all items confident (gap 0.8) -> empty region -> same as margin
        let emb = logits_of(&[&[0.9, 0.1], &[0.85, 0.15], &[0.95, 0.05]]);
        let clf = passthrough_classifier(2);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1, 2], Some(&clf), 0, StrategyParams::default()).unwrap();
        assert_eq!(select_margin_cluster_mean(&ctx, 2).unwrap(), select_margin(&ctx, 2).unwrap());

        // exactly two items in the region
        let emb = logits_of(&[&[0.52, 0.48], &[0.85, 0.15], &[0.45, 0.55]]);
        let ctx = SelectionContext::new(&emb, &[], &[0, 1, 2], Some(&clf), 0, StrategyParams::default()).unwrap();
        let mut sel = select_margin_cluster_mean(&ctx, 2).unwrap().indices;
        sel.sort();
        assert_eq!(sel, vec![0, 2]);
    }
}

//! Clustering used by the density-aware query strategies.

use rand::Rng;

use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::scalar::{squared_euclidean, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Average-linkage hierarchy over `n` points, merges sorted by height.
#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

#[inline]
fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Average-linkage agglomerative clustering on Euclidean distances, built
/// with the nearest-neighbour chain algorithm in O(n²) time and memory.
pub fn average_linkage<T: Scalar>(points: &Matrix<T>) -> Dendrogram {
    let n = points.rows();
    if n < 2 {
        return Dendrogram { n, merges: Vec::new() };
    }
    let mut dist = vec![T::zero(); n * (n - 1) / 2];
    for i in 0..n {
        for j in i + 1..n {
            dist[condensed_index(n, i, j)] = squared_euclidean(points.row(i), points.row(j)).sqrt();
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut active_count = n;
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n - 1);
    while active_count > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (a, b, d) = loop {
            let a = *chain.last().expect("chain is non-empty");
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            let mut best: Option<(usize, T)> = prev.map(|p| (p, dist[condensed_index(n, a, p)]));
            for k in 0..n {
                if k == a || !active[k] {
                    continue;
                }
                let d = dist[condensed_index(n, a, k)];
                match best {
                    Some((_, bd)) if d >= bd => {}
                    _ => best = Some((k, d)),
                }
            }
            let (b, d) = best.expect("another active cluster exists");
            if Some(b) == prev {
                break (a, b, d);
            }
            chain.push(b);
        };
        chain.pop();
        chain.pop();
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        merges.push(Merge { a: keep, b: drop, height: d.as_f64() });
        let (sk, sd) = (T::of(size[keep] as f64), T::of(size[drop] as f64));
        for k in 0..n {
            if !active[k] || k == keep || k == drop {
                continue;
            }
            let dk = dist[condensed_index(n, keep, k)];
            let dd = dist[condensed_index(n, drop, k)];
            dist[condensed_index(n, keep, k)] = (sk * dk + sd * dd) / (sk + sd);
        }
        size[keep] += size[drop];
        active[drop] = false;
        active_count -= 1;
    }
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    Dendrogram { n, merges }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Dendrogram {
    /// Flat clustering into `min(clusters, n)` groups. Clusters are numbered
    /// by their smallest member index.
    pub fn cut(&self, clusters: usize) -> Vec<usize> {
        let clusters = clusters.clamp(1, self.n.max(1));
        let mut parent: Vec<usize> = (0..self.n).collect();
        for m in self.merges.iter().take(self.n.saturating_sub(clusters)) {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
        let mut label_of_root = vec![usize::MAX; self.n];
        let mut next = 0;
        (0..self.n)
            .map(|i| {
                let r = find(&mut parent, i);
                if label_of_root[r] == usize::MAX {
                    label_of_root[r] = next;
                    next += 1;
                }
                label_of_root[r]
            })
            .collect()
    }
}

/// Greedy farthest-first traversal: starts from `first`, then repeatedly adds
/// the point farthest from the chosen set (lowest index on ties).
pub fn farthest_first<T: Scalar>(points: &Matrix<T>, first: usize, k: usize) -> Vec<usize> {
    let n = points.rows();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut chosen = vec![first];
    let mut min_d: Vec<T> = (0..n).map(|i| squared_euclidean(points.row(i), points.row(first))).collect();
    while chosen.len() < k {
        let mut best = usize::MAX;
        for i in 0..n {
            if min_d[i] > T::zero() && (best == usize::MAX || min_d[i] > min_d[best]) {
                best = i;
            }
        }
        if best == usize::MAX {
            // all remaining points coincide with a chosen one
            best = (0..n).find(|i| !chosen.contains(i)).expect("k <= n");
        }
        chosen.push(best);
        for i in 0..n {
            let d = squared_euclidean(points.row(i), points.row(best));
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<T> {
    pub centroids: Matrix<T>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

/// Lloyd iterations seeded by farthest-first traversal from a random start.
/// Empty clusters keep their previous centroid.
pub fn kmeans<T: Scalar>(points: &Matrix<T>, k: usize, seed: u64, max_iter: usize) -> KMeans<T> {
    let n = points.rows();
    let k = k.min(n).max(1);
    let first = if n == 0 { 0 } else { seeded(seed).random_range(0..n) };
    let init = if n == 0 { Vec::new() } else { farthest_first(points, first, k) };
    let mut centroids = points.select_rows(&init);
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let c = nearest_row(&centroids, points.row(i));
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::<T>::zeros(centroids.rows(), points.cols());
        let mut counts = vec![0usize; centroids.rows()];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, &v) in sums.row_mut(assignment[i]).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = T::one() / T::of(count as f64);
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    KMeans { centroids, assignment, iterations }
}

/// Row of `rows` nearest to `x` (lowest index on ties).
pub fn nearest_row<T: Scalar>(rows: &Matrix<T>, x: &[T]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, r) in rows.iter_rows().enumerate() {
        let d = squared_euclidean(r, x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

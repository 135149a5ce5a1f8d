//! One-dimensional K-means with k-means++ seeding and restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::seed::derive_seed;

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

const PAR_THRESHOLD: usize = 16_384;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Ascending. Empty clusters are removed, so this may be shorter than k
    /// when the data has fewer than k distinct values.
    pub centroids: Vec<f64>,
    /// Index into `centroids` for every input value.
    pub assignments: Vec<usize>,
    /// Within-cluster SSE after each iteration of the winning restart.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn sse(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.assignments)
            .map(|(v, &a)| (v - self.centroids[a]).powi(2))
            .sum()
    }
}

fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = (v - c).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn assign(values: &[f64], centroids: &[f64]) -> Vec<usize> {
    if values.len() >= PAR_THRESHOLD {
        values.par_iter().map(|&v| nearest(centroids, v)).collect()
    } else {
        values.iter().map(|&v| nearest(centroids, v)).collect()
    }
}

fn plus_plus(values: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = vec![values[rng.random_range(0..values.len())]];
    let mut d2: Vec<f64> = values.iter().map(|v| (v - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = values.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..values.len())
        };
        let c = values[next];
        centroids.push(c);
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min((v - c).powi(2));
        }
    }
    centroids
}

fn lloyd(values: &[f64], mut centroids: Vec<f64>) -> (Vec<f64>, Vec<usize>, Vec<f64>, usize) {
    let k = centroids.len();
    let mut assignments = assign(values, &centroids);
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in values.iter().zip(&assignments) {
            sums[a] += v;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j] / counts[j] as f64;
            }
        }
        // an empty cluster takes over the point farthest from its centroid
        for j in 0..k {
            if counts[j] == 0 {
                let far = values
                    .iter()
                    .enumerate()
                    .max_by(|(i, v), (l, w)| {
                        let dv = (*v - centroids[assignments[*i]]).abs();
                        let dw = (*w - centroids[assignments[*l]]).abs();
                        dv.total_cmp(&dw).then(l.cmp(i))
                    })
                    .map(|(i, _)| i)
                    .expect("non-empty input");
                if (values[far] - centroids[assignments[far]]).abs() > 0.0 {
                    counts[assignments[far]] -= 1;
                    assignments[far] = j;
                    counts[j] = 1;
                    centroids[j] = values[far];
                }
            }
        }
        let next = assign(values, &centroids);
        let sse: f64 = values.iter().zip(&next).map(|(v, &a)| (v - centroids[a]).powi(2)).sum();
        history.push(sse);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    (centroids, assignments, history, iterations)
}

/// Best of `restarts` k-means++ runs by final SSE. Requires
/// `1 <= k <= values.len()`.
pub fn kmeans_1d(values: &[f64], k: usize, seed: u64, restarts: usize) -> KMeans {
    assert!(k >= 1 && k <= values.len(), "k must be in 1..=n");
    let mut best: Option<(f64, KMeans)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("kmeans/{r}")));
        let init = plus_plus(values, k, &mut rng);
        let (centroids, assignments, sse_history, iterations) = lloyd(values, init);
        let result = compact(values, centroids, assignments, sse_history, iterations);
        let sse = result.sse(values);
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, result));
        }
    }
    best.expect("at least one restart").1
}

/// Drops empty clusters, sorts ascending, and recomputes each centroid as
/// the exact mean of its members.
fn compact(values: &[f64], centroids: Vec<f64>, assignments: Vec<usize>, sse_history: Vec<f64>, iterations: usize) -> KMeans {
    let k = centroids.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (v, &a) in values.iter().zip(&assignments) {
        sums[a] += v;
        counts[a] += 1;
    }
    let mut live: Vec<(usize, f64)> = (0..k).filter(|&j| counts[j] > 0).map(|j| (j, sums[j] / counts[j] as f64)).collect();
    live.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut remap = vec![usize::MAX; k];
    for (new, (old, _)) in live.iter().enumerate() {
        remap[*old] = new;
    }
    KMeans {
        centroids: live.iter().map(|(_, c)| *c).collect(),
        assignments: assignments.into_iter().map(|a| remap[a]).collect(),
        sse_history,
        iterations,
    }
}

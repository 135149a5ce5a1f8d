//! Entropy-based instruction data selection.
//!
//! Per-sample entropies are clustered with 1-D K-means, small clusters are
//! discarded, survivors are subsampled to a fixed size, and clusters whose
//! centroid lies in a band above the pre-training entropy are selected.

pub mod kmeans;

use std::collections::BTreeSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::Record;
use crate::seed::rng_for;

pub use kmeans::{kmeans_1d, KMeans, DEFAULT_RESTARTS, MAX_ITERATIONS};

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 50_000;
pub const DEFAULT_SAMPLE_SIZE: usize = 50_000;
/// Corpus size the default cluster thresholds are calibrated for.
pub const REFERENCE_CORPUS_SIZE: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of scores ({n})")]
    TooFewScores { k: usize, n: usize },
    #[error("score for {0} is not finite")]
    NonFinite(String),
    #[error("band low offset {0} must be below high offset {1}")]
    BadBand(f64, f64),
    #[error("min_cluster_size must be at least 1")]
    ZeroMinClusterSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyScore {
    pub id: String,
    pub entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
}

impl Record for EntropyScore {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if !self.entropy.is_finite() || self.entropy < 0.0 {
            return Err(format!("entropy {} is not a finite nonnegative number", self.entropy));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCluster {
    pub label: String,
    pub centroid: f64,
    /// Size before any sampling.
    pub size: usize,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_tokens: Option<f64>,
}

/// Clusters scores into at most `k` groups, labelled `cluster_1..` in
/// ascending centroid order.
pub fn kmeans_cluster(scores: &[EntropyScore], k: usize, seed: u64) -> Result<Vec<EntropyCluster>, SelectError> {
    if k == 0 {
        return Err(SelectError::ZeroK);
    }
    if k > scores.len() {
        return Err(SelectError::TooFewScores { k, n: scores.len() });
    }
    if let Some(bad) = scores.iter().find(|s| !s.entropy.is_finite()) {
        return Err(SelectError::NonFinite(bad.id.clone()));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.entropy).collect();
    let km = kmeans_1d(&values, k, seed, DEFAULT_RESTARTS);
    let mut clusters: Vec<EntropyCluster> = km
        .centroids
        .iter()
        .enumerate()
        .map(|(i, c)| EntropyCluster {
            label: format!("cluster_{}", i + 1),
            centroid: *c,
            size: 0,
            members: Vec::new(),
            mean_tokens: None,
        })
        .collect();
    let mut token_sums = vec![(0usize, 0usize); clusters.len()];
    for (s, &a) in scores.iter().zip(&km.assignments) {
        clusters[a].members.push(s.id.clone());
        if let Some(t) = s.tokens {
            token_sums[a].0 += t;
            token_sums[a].1 += 1;
        }
    }
    for (c, (sum, n)) in clusters.iter_mut().zip(token_sums) {
        c.size = c.members.len();
        c.mean_tokens = (n > 0).then(|| sum as f64 / n as f64);
    }
    Ok(clusters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ZeroShot,
    FiveShot,
}

impl Mode {
    pub fn default_band(self) -> (f64, f64) {
        match self {
            Mode::ZeroShot => (1.0, 1.5),
            Mode::FiveShot => (0.5, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub mode: Mode,
    pub pretraining_entropy: f64,
    /// Offsets above `pretraining_entropy`, both inclusive.
    pub band: (f64, f64),
    pub min_cluster_size: usize,
    pub sample_size: usize,
}

impl SelectionPolicy {
    pub fn new(mode: Mode, pretraining_entropy: f64) -> Self {
        SelectionPolicy {
            mode,
            pretraining_entropy,
            band: mode.default_band(),
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            sample_size: DEFAULT_SAMPLE_SIZE,
        }
    }

    /// Scales the cluster thresholds linearly to a corpus of `n` scores.
    pub fn desk_scaled(mut self, n: usize) -> Self {
        let scale = |v: usize| ((v as u128 * n as u128) / REFERENCE_CORPUS_SIZE as u128).max(1) as usize;
        self.min_cluster_size = scale(DEFAULT_MIN_CLUSTER_SIZE);
        self.sample_size = scale(DEFAULT_SAMPLE_SIZE);
        self
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        if !(self.band.0 <= self.band.1) {
            return Err(SelectError::BadBand(self.band.0, self.band.1));
        }
        if self.min_cluster_size == 0 {
            return Err(SelectError::ZeroMinClusterSize);
        }
        Ok(())
    }
}

/// Drops clusters below `min_cluster_size` and samples `sample_size`
/// members from each survivor. Returns the survivors and any warnings.
pub fn filter_and_sample(clusters: &[EntropyCluster], policy: &SelectionPolicy, seed: u64) -> (Vec<EntropyCluster>, Vec<String>) {
    let mut warnings = Vec::new();
    let kept: Vec<EntropyCluster> = clusters
        .iter()
        .filter(|c| c.size >= policy.min_cluster_size)
        .map(|c| {
            let mut out = c.clone();
            if policy.sample_size < c.members.len() {
                let mut rng = rng_for(seed, &format!("select/sample/{}", c.label));
                let mut picked = sample(&mut rng, c.members.len(), policy.sample_size).into_vec();
                picked.sort_unstable();
                out.members = picked.into_iter().map(|i| c.members[i].clone()).collect();
            }
            out
        })
        .collect();
    if kept.is_empty() {
        warnings.push(format!(
            "no cluster reaches min_cluster_size {} (largest has {})",
            policy.min_cluster_size,
            clusters.iter().map(|c| c.size).max().unwrap_or(0)
        ));
    }
    (kept, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStatus {
    Ok,
    NoClusterInBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidStatus {
    pub label: String,
    pub centroid: f64,
    pub size: usize,
    pub offset: f64,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub status: SelectionStatus,
    pub pretraining_entropy: f64,
    /// Absolute band `[pe + low, pe + high]`.
    pub band: (f64, f64),
    pub clusters: Vec<CentroidStatus>,
    pub selected: Vec<String>,
}

/// Selects clusters whose centroid minus the pre-training entropy lies in
/// the inclusive offset band.
pub fn select_by_entropy_band(clusters: &[EntropyCluster], policy: &SelectionPolicy) -> BandSelection {
    let pe = policy.pretraining_entropy;
    let (lo, hi) = policy.band;
    let statuses: Vec<CentroidStatus> = clusters
        .iter()
        .map(|c| {
            let offset = c.centroid - pe;
            CentroidStatus {
                label: c.label.clone(),
                centroid: c.centroid,
                size: c.size,
                offset,
                in_band: lo <= offset && offset <= hi,
            }
        })
        .collect();
    let selected: Vec<String> = statuses.iter().filter(|s| s.in_band).map(|s| s.label.clone()).collect();
    BandSelection {
        status: if selected.is_empty() { SelectionStatus::NoClusterInBand } else { SelectionStatus::Ok },
        pretraining_entropy: pe,
        band: (pe + lo, pe + hi),
        clusters: statuses,
        selected,
    }
}

/// Member ids of the selected clusters, in cluster order.
pub fn selected_ids(clusters: &[EntropyCluster], selection: &BandSelection) -> Vec<String> {
    let chosen: BTreeSet<&str> = selection.selected.iter().map(String::as_str).collect();
    clusters
        .iter()
        .filter(|c| chosen.contains(c.label.as_str()))
        .flat_map(|c| c.members.iter().cloned())
        .collect()
}

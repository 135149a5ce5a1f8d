//! Category-weighted sampling and curriculum layout.
//!
//! Quotas come from the normalized weights by the largest-remainder method,
//! so they sum exactly to the budget. A category short of its quota is
//! up-sampled by repeating whole documents; one with a surplus is
//! down-sampled. Both use the same draw: walk a fresh seeded permutation
//! of the category per pass and take documents until the quota is met.
//! Repeat counts across documents therefore differ by at most one.
//!
//! The sampled pool is then laid out either as one uniform shuffle, or as
//! category blocks in a given order with a seeded shuffle inside each
//! block (optionally split further into sub-blocks by a metadata field).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::BpeModel;
use crate::config::{validate_weights, ConfigError};
use crate::document::Document;
use crate::seed::rng_for;

#[derive(Debug, Error)]
pub enum MixError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("category {0} has a nonzero weight but no documents in the corpus")]
    MissingCategory(String),
    #[error("category {0} has a token quota but its documents contain no tokens")]
    ZeroTokens(String),
    #[error("blocked layout requires block_order")]
    BlockedWithoutOrder,
    #[error("block_order must be a permutation of the nonzero-weight categories: {0}")]
    BadBlockOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Tokens,
    Docs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Shuffled,
    Blocked,
}

/// Which document field names the mixture category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    Source,
    Lang,
}

impl GroupBy {
    pub fn key<'a>(self, doc: &'a Document) -> &'a str {
        match self {
            GroupBy::Source => &doc.source,
            GroupBy::Lang => doc.lang.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: BTreeMap<String, f64>,
    pub total_budget: u64,
    pub unit: Unit,
    pub layout: LayoutKind,
    #[serde(default)]
    pub block_order: Option<Vec<String>>,
    #[serde(default)]
    pub group_by: GroupBy,
    /// Field splitting each block into sub-blocks (blocked only): `source`,
    /// `lang`, or a metadata key.
    #[serde(default)]
    pub sub_block_by: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<(), MixError> {
        validate_weights(&self.weights)?;
        if self.layout == LayoutKind::Blocked {
            let order = self.block_order.as_ref().ok_or(MixError::BlockedWithoutOrder)?;
            let mut listed: Vec<&String> = order.iter().collect();
            listed.sort();
            let mut expected: Vec<&String> = self.weights.iter().filter(|(_, w)| **w > 0.0).map(|(k, _)| k).collect();
            expected.sort();
            if listed != expected {
                return Err(MixError::BadBlockOrder(format!("got {order:?}, expected an ordering of {expected:?}")));
            }
        }
        Ok(())
    }

    pub fn normalized_weights(&self) -> BTreeMap<String, f64> {
        let total: f64 = self.weights.values().sum();
        self.weights
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, w)| (k.clone(), w / total))
            .collect()
    }
}

/// Splits `budget` in proportion to the positive weights. Floors first,
/// then the leftover units go to the largest fractional remainders (ties
/// to the earlier category name).
pub fn largest_remainder(weights: &BTreeMap<String, f64>, budget: u64) -> BTreeMap<String, u64> {
    let total: f64 = weights.values().filter(|w| **w > 0.0).sum();
    if total <= 0.0 {
        return BTreeMap::new();
    }
    let shares: Vec<(&String, f64)> = weights
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .map(|(k, w)| (k, w * budget as f64 / total))
        .collect();
    let mut quotas: BTreeMap<String, u64> = shares.iter().map(|(k, s)| ((*k).clone(), s.floor() as u64)).collect();
    let assigned: u64 = quotas.values().sum();
    let mut order: Vec<(usize, f64)> = shares.iter().enumerate().map(|(i, (_, s))| (i, s - s.floor())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(i, _) in order.iter().take(budget.saturating_sub(assigned) as usize) {
        *quotas.get_mut(shares[i].0).expect("present") += 1;
    }
    quotas
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub category: String,
    pub tokens: u64,
    /// 0 for the first draw of a document, 1 for its first repeat, ...
    pub repeat: u32,
    /// Index of the document in the input corpus.
    pub source_index: usize,
    /// Value of the sub-block metadata field, if configured.
    pub sub_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPool {
    pub entries: Vec<PoolEntry>,
    pub unit: Unit,
    /// Per-category quota in `unit`.
    pub quotas: BTreeMap<String, u64>,
    /// Per-category achieved amount in `unit`.
    pub achieved: BTreeMap<String, u64>,
}

impl SampledPool {
    pub fn proportions(&self) -> BTreeMap<String, f64> {
        let total: u64 = self.achieved.values().sum();
        self.achieved
            .iter()
            .map(|(k, v)| (k.clone(), if total == 0 { 0.0 } else { *v as f64 / total as f64 }))
            .collect()
    }
}

/// `source` and `lang` name document fields; any other key reads `meta`.
fn sub_block_key(doc: &Document, key: &str) -> String {
    match key {
        "source" => doc.source.clone(),
        "lang" => doc.lang.as_str().to_string(),
        _ => doc.meta.get(key).cloned().unwrap_or_default(),
    }
}

struct Candidate {
    index: usize,
    size: u64,
}

fn draw(candidates: &[Candidate], quota: u64, seed: u64, category: &str) -> Vec<(usize, u32)> {
    let mut rng = rng_for(seed, &format!("sample/{category}"));
    let mut picks = Vec::new();
    let mut acc = 0u64;
    let mut pass = 0u32;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    while acc < quota {
        order.shuffle(&mut rng);
        for &i in &order {
            if acc >= quota {
                break;
            }
            picks.push((candidates[i].index, pass));
            acc += candidates[i].size;
        }
        pass += 1;
    }
    picks
}

/// Samples the corpus to the mixture quotas. Categories with zero weight
/// contribute nothing.
pub fn sample_mixture(corpus: &[Document], spec: &MixtureSpec, tokenizer: &BpeModel) -> Result<SampledPool, MixError> {
    validate_weights(&spec.weights)?;
    let quotas = largest_remainder(&spec.weights, spec.total_budget);

    let token_counts: Vec<u64> = corpus
        .par_iter()
        .map(|d| {
            if quotas.contains_key(spec.group_by.key(d)) {
                tokenizer.count_tokens(&d.text) as u64
            } else {
                0
            }
        })
        .collect();

    let mut by_category: BTreeMap<&str, Vec<Candidate>> = BTreeMap::new();
    for (index, doc) in corpus.iter().enumerate() {
        let cat = spec.group_by.key(doc);
        if quotas.contains_key(cat) {
            let size = match spec.unit {
                Unit::Docs => 1,
                Unit::Tokens => token_counts[index],
            };
            by_category.entry(cat).or_default().push(Candidate { index, size });
        }
    }

    let mut entries = Vec::new();
    let mut achieved = BTreeMap::new();
    for (category, &quota) in &quotas {
        let Some(candidates) = by_category.get(category.as_str()) else {
            return Err(MixError::MissingCategory(category.clone()));
        };
        if quota > 0 && candidates.iter().all(|c| c.size == 0) {
            return Err(MixError::ZeroTokens(category.clone()));
        }
        let mut amount = 0;
        for (index, repeat) in draw(candidates, quota, spec.seed, category) {
            let doc = &corpus[index];
            amount += match spec.unit {
                Unit::Docs => 1,
                Unit::Tokens => token_counts[index],
            };
            entries.push(PoolEntry {
                id: doc.id.clone(),
                category: category.clone(),
                tokens: token_counts[index],
                repeat,
                source_index: index,
                sub_key: spec.sub_block_by.as_deref().map(|k| sub_block_key(doc, k)),
            });
        }
        achieved.insert(category.clone(), amount);
    }
    Ok(SampledPool {
        entries,
        unit: spec.unit,
        quotas,
        achieved,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub tokens: u64,
    pub position: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub proportions: BTreeMap<String, f64>,
    pub layout: LayoutKind,
    pub seed: u64,
}

impl Manifest {
    /// Number of maximal runs of equal consecutive categories.
    pub fn category_runs(&self) -> usize {
        self.entries
            .windows(2)
            .filter(|w| w[0].category != w[1].category)
            .count()
            + usize::from(!self.entries.is_empty())
    }
}

/// Orders the pool. Never adds or removes entries.
pub fn layout(pool: &SampledPool, spec: &MixtureSpec) -> Result<Manifest, MixError> {
    let mut ordered: Vec<&PoolEntry> = pool.entries.iter().collect();
    match spec.layout {
        LayoutKind::Shuffled => ordered.shuffle(&mut rng_for(spec.seed, "layout/shuffled")),
        LayoutKind::Blocked => {
            let order = spec.block_order.as_ref().ok_or(MixError::BlockedWithoutOrder)?;
            if let Some(stray) = pool.entries.iter().find(|e| !order.contains(&e.category)) {
                return Err(MixError::BadBlockOrder(format!("{} is not in block_order", stray.category)));
            }
            let mut out = Vec::with_capacity(ordered.len());
            for category in order {
                let mut sub_blocks: BTreeMap<Option<&str>, Vec<&PoolEntry>> = BTreeMap::new();
                for e in ordered.iter().filter(|e| &e.category == category) {
                    sub_blocks.entry(e.sub_key.as_deref()).or_default().push(e);
                }
                for (key, mut block) in sub_blocks {
                    let label = format!("layout/blocked/{category}/{}", key.unwrap_or(""));
                    block.shuffle(&mut rng_for(spec.seed, &label));
                    out.extend(block);
                }
            }
            ordered = out;
        }
    }
    Ok(Manifest {
        entries: ordered
            .into_iter()
            .enumerate()
            .map(|(position, e)| ManifestEntry {
                id: e.id.clone(),
                category: e.category.clone(),
                tokens: e.tokens,
                position: position as u64,
            })
            .collect(),
        proportions: pool.proportions(),
        layout: spec.layout,
        seed: spec.seed,
    })
}

/// Materializes manifest entries as documents, in manifest order. The
/// k-th repeat of a document gets id `<id>#r<k>` and `meta.repeat = k`.
pub fn materialize(corpus: &[Document], manifest: &Manifest) -> Vec<Document> {
    let by_id: BTreeMap<&str, &Document> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
    manifest
        .entries
        .iter()
        .filter_map(|e| {
            let doc = by_id.get(e.id.as_str())?;
            let k = seen.entry(e.id.as_str()).or_default();
            let mut out = (*doc).clone();
            if *k > 0 {
                out.id = format!("{}#r{}", doc.id, k);
                out.meta.insert("repeat".into(), k.to_string());
            }
            *k += 1;
            Some(out)
        })
        .collect()
}

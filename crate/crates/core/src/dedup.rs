//! Near-duplicate removal with 64-bit SimHash and banded lookup.
//!
//! Fingerprints are built from overlapping character shingles, each hashed
//! with XXH3-64 under [`SIMHASH_SEED`] and weighted 1 per occurrence.
//!
//! For a Hamming threshold `t` the signature is cut into `t + 1` disjoint
//! blocks and indexed once per block. Two signatures within distance `t`
//! differ in at most `t` blocks, so they agree on at least one, which makes
//! candidate lookup exact rather than probabilistic. At the default `t = 3`
//! the layout is four 16-bit blocks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::document::Document;

/// Seed for the shingle hash. Changing it changes every fingerprint.
pub const SIMHASH_SEED: u64 = 0x5348_494e_474c_4531;
pub const DEFAULT_SHINGLE_LEN: usize = 4;
pub const MAX_THRESHOLD: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DedupError {
    #[error("empty-document")]
    EmptyDocument,
    #[error("hamming threshold {0} exceeds the supported maximum of {MAX_THRESHOLD}")]
    ThresholdTooLarge(u32),
    #[error("shingle length must be positive")]
    ZeroShingle,
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// 64-bit SimHash over character shingles of `shingle_len`. Texts shorter
/// than one shingle are hashed as a single shingle. Bit `i` is set iff more
/// shingles have it set than clear (ties give 0).
pub fn simhash(text: &str, shingle_len: usize) -> Result<u64, DedupError> {
    if shingle_len == 0 {
        return Err(DedupError::ZeroShingle);
    }
    if text.is_empty() {
        return Err(DedupError::EmptyDocument);
    }
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let chars = bounds.len() - 1;
    let mut sums = [0i64; 64];
    let mut add = |shingle: &str| {
        let h = xxh3_64_with_seed(shingle.as_bytes(), SIMHASH_SEED);
        for (bit, sum) in sums.iter_mut().enumerate() {
            if h >> bit & 1 == 1 {
                *sum += 1;
            } else {
                *sum -= 1;
            }
        }
    };
    if chars <= shingle_len {
        add(text);
    } else {
        for start in 0..=chars - shingle_len {
            add(&text[bounds[start]..bounds[start + shingle_len]]);
        }
    }
    Ok(sums
        .iter()
        .enumerate()
        .fold(0u64, |acc, (bit, &s)| if s > 0 { acc | 1 << bit } else { acc }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub bits: u64,
    pub doc_id: String,
}

impl Fingerprint {
    pub fn of(doc: &Document, shingle_len: usize) -> Result<Self, DedupError> {
        Ok(Self {
            bits: simhash(&doc.text, shingle_len)?,
            doc_id: doc.id.clone(),
        })
    }
}

/// `(shift, mask)` for each of the `t + 1` disjoint blocks covering 64 bits.
fn block_layout(threshold: u32) -> Vec<(u32, u64)> {
    let blocks = threshold + 1;
    let base = 64 / blocks;
    let extra = 64 % blocks;
    let mut shift = 0;
    (0..blocks)
        .map(|i| {
            let width = base + u32::from(i < extra);
            let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let out = (shift, mask);
            shift += width;
            out
        })
        .collect()
}

/// Block tables over inserted signatures. Each table maps a block value to
/// the slots whose signature carries it.
#[derive(Debug, Clone)]
pub struct BandIndex {
    threshold: u32,
    layout: Vec<(u32, u64)>,
    tables: Vec<HashMap<u64, Vec<usize>>>,
    signatures: Vec<u64>,
}

impl BandIndex {
    pub fn new(threshold: u32) -> Result<Self, DedupError> {
        if threshold > MAX_THRESHOLD {
            return Err(DedupError::ThresholdTooLarge(threshold));
        }
        let layout = block_layout(threshold);
        Ok(Self {
            threshold,
            tables: vec![HashMap::new(); layout.len()],
            layout,
            signatures: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn signature(&self, slot: usize) -> u64 {
        self.signatures[slot]
    }

    /// Returns the slot assigned to `bits`.
    pub fn insert(&mut self, bits: u64) -> usize {
        let slot = self.signatures.len();
        for (table, &(shift, mask)) in self.tables.iter_mut().zip(&self.layout) {
            table.entry(bits >> shift & mask).or_default().push(slot);
        }
        self.signatures.push(bits);
        slot
    }

    /// Slots sharing at least one block with `bits`, ascending, deduplicated.
    pub fn candidates(&self, bits: u64) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .tables
            .iter()
            .zip(&self.layout)
            .filter_map(|(table, &(shift, mask))| table.get(&(bits >> shift & mask)))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Earliest inserted slot within the threshold, with its distance.
    pub fn first_match(&self, bits: u64) -> Option<(usize, u32)> {
        self.candidates(bits)
            .into_iter()
            .map(|slot| (slot, hamming(bits, self.signatures[slot])))
            .find(|&(_, d)| d <= self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub threshold: u32,
    pub shingle_len: usize,
    /// Keep one index per source category instead of one global index.
    pub by_source: bool,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: 3,
            shingle_len: DEFAULT_SHINGLE_LEN,
            by_source: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub kept_id: String,
    pub dropped_id: String,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Duplicate(DuplicatePair),
}

/// Streaming greedy pass: a document is dropped iff an already-kept
/// document lies within the threshold. The first occurrence always wins.
#[derive(Debug, Clone)]
pub struct Deduplicator {
    cfg: DedupConfig,
    indexes: HashMap<String, (BandIndex, Vec<String>)>,
}

impl Deduplicator {
    pub fn new(cfg: DedupConfig) -> Result<Self, DedupError> {
        if cfg.shingle_len == 0 {
            return Err(DedupError::ZeroShingle);
        }
        BandIndex::new(cfg.threshold)?;
        Ok(Self {
            cfg,
            indexes: HashMap::new(),
        })
    }

    pub fn config(&self) -> &DedupConfig {
        &self.cfg
    }

    pub fn fingerprint(&self, doc: &Document) -> Result<u64, DedupError> {
        simhash(&doc.text, self.cfg.shingle_len)
    }

    pub fn offer(&mut self, doc: &Document) -> Result<Verdict, DedupError> {
        let bits = self.fingerprint(doc)?;
        Ok(self.offer_fingerprint(doc, bits))
    }

    /// Like [`offer`](Self::offer) with a precomputed signature, so
    /// fingerprinting can run in parallel ahead of the sequential pass.
    pub fn offer_fingerprint(&mut self, doc: &Document, bits: u64) -> Verdict {
        let key = if self.cfg.by_source { doc.source.as_str() } else { "" };
        if !self.indexes.contains_key(key) {
            let index = BandIndex::new(self.cfg.threshold).expect("threshold checked in new");
            self.indexes.insert(key.to_string(), (index, Vec::new()));
        }
        let (index, ids) = self.indexes.get_mut(key).expect("inserted above");
        match index.first_match(bits) {
            Some((slot, distance)) => Verdict::Duplicate(DuplicatePair {
                kept_id: ids[slot].clone(),
                dropped_id: doc.id.clone(),
                distance,
            }),
            None => {
                index.insert(bits);
                ids.push(doc.id.clone());
                Verdict::Keep
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupResult {
    pub kept: Vec<Document>,
    pub duplicates: Vec<DuplicatePair>,
    /// Documents that could not be fingerprinted, with the reason.
    pub errors: Vec<(String, DedupError)>,
}

/// In-memory convenience over [`Deduplicator`]. Unfingerprintable
/// documents are left out of `kept` and listed in `errors`.
pub fn dedup_corpus<I>(corpus: I, cfg: DedupConfig) -> Result<DedupResult, DedupError>
where
    I: IntoIterator<Item = Document>,
{
    let mut dedup = Deduplicator::new(cfg)?;
    let mut out = DedupResult::default();
    for doc in corpus {
        match dedup.offer(&doc) {
            Ok(Verdict::Keep) => out.kept.push(doc),
            Ok(Verdict::Duplicate(pair)) => out.duplicates.push(pair),
            Err(e) => out.errors.push((doc.id.clone(), e)),
        }
    }
    Ok(out)
}

//! Add-α smoothed n-gram language model over BPE tokens.
//!
//! Used as a cheap stand-in scorer: per-document cross-entropy (nats per
//! token) and the train-on-one-source, evaluate-on-each perplexity matrix.
//!
//! Every document is modelled as `BOS^(n-1) t_1 .. t_T EOS`. The outcome
//! space is the tokenizer vocabulary plus EOS; BOS only appears in
//! contexts. `P(t | ctx) = (c(ctx, t) + α) / (c(ctx) + α·|outcomes|)`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{BpeError, BpeModel};
use crate::document::Document;
use crate::seed::rng_for;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_HOLDOUT: f64 = 0.1;
/// Meta key holding the byte offset where a document's output span starts.
pub const OUTPUT_OFFSET_KEY: &str = "output_offset";

pub const BOS: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("document {0} has no tokens to score")]
    EmptyTokenization(String),
    #[error("document {id}: {message}")]
    BadOutputOffset { id: String, message: String },
    #[error("need at least 2 sources, got {0}")]
    TooFewSources(usize),
    #[error("source {0} is too small to split into train and held-out parts")]
    SourceTooSmall(String),
    #[error(transparent)]
    Tokenizer(#[from] BpeError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Raw n-gram count tables over an integer alphabet `0..outcomes`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramCounts {
    order: usize,
    alpha: f64,
    outcomes: u32,
    table: HashMap<Vec<u32>, ContextCounts>,
}

impl NgramCounts {
    pub fn new(order: usize, alpha: f64, outcomes: u32) -> Result<Self, OracleError> {
        if order == 0 {
            return Err(OracleError::ZeroOrder);
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(OracleError::BadAlpha(alpha));
        }
        Ok(NgramCounts {
            order,
            alpha,
            outcomes,
            table: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn outcomes(&self) -> u32 {
        self.outcomes
    }

    fn padded(&self, seq: &[u32]) -> Vec<u32> {
        let mut p = vec![BOS; self.order - 1];
        p.extend_from_slice(seq);
        p
    }

    /// Counts every position of `seq` (which should already end in EOS).
    pub fn observe(&mut self, seq: &[u32]) {
        let padded = self.padded(seq);
        for w in padded.windows(self.order) {
            let (ctx, tok) = w.split_at(self.order - 1);
            let entry = self.table.entry(ctx.to_vec()).or_default();
            entry.total += 1;
            *entry.next.entry(tok[0]).or_default() += 1;
        }
    }

    /// Sums two count tables over the same alphabet.
    pub fn merge(mut self, other: NgramCounts) -> NgramCounts {
        for (ctx, c) in other.table {
            let entry = self.table.entry(ctx).or_default();
            entry.total += c.total;
            for (t, n) in c.next {
                *entry.next.entry(t).or_default() += n;
            }
        }
        self
    }

    pub fn prob(&self, context: &[u32], token: u32) -> f64 {
        let denom_extra = self.alpha * self.outcomes as f64;
        match self.table.get(context) {
            Some(c) => (c.next.get(&token).copied().unwrap_or(0) as f64 + self.alpha) / (c.total as f64 + denom_extra),
            None => 1.0 / self.outcomes as f64,
        }
    }

    /// Negative log-probabilities of every position of `seq`.
    pub fn nll(&self, seq: &[u32]) -> Vec<f64> {
        let padded = self.padded(seq);
        padded
            .windows(self.order)
            .map(|w| {
                let (ctx, tok) = w.split_at(self.order - 1);
                -self.prob(ctx, tok[0]).ln()
            })
            .collect()
    }
}

/// An n-gram model bundled with the tokenizer that defines its alphabet.
#[derive(Debug, Clone)]
pub struct NgramModel {
    counts: NgramCounts,
    tokenizer: BpeModel,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    alpha: f64,
    tokenizer: serde_json::Value,
    /// (context, [(token, count)]) sorted by context.
    contexts: Vec<(Vec<u32>, Vec<(u32, u64)>)>,
}

/// Cross-entropy of one document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Mean negative log-likelihood in nats per scored token.
    pub entropy: f64,
    pub tokens: usize,
    /// Total negative log-likelihood over scored tokens.
    pub nll: f64,
}

impl NgramModel {
    pub fn eos(&self) -> u32 {
        self.tokenizer.vocab_size() as u32
    }

    pub fn counts(&self) -> &NgramCounts {
        &self.counts
    }

    pub fn tokenizer(&self) -> &BpeModel {
        &self.tokenizer
    }

    /// `P(token | context)` with `context` of length `order - 1`.
    pub fn prob(&self, context: &[u32], token: u32) -> f64 {
        self.counts.prob(context, token)
    }

    /// Sum of the smoothed conditional over all outcomes.
    pub fn mass(&self, context: &[u32]) -> f64 {
        (0..self.counts.outcomes).map(|t| self.prob(context, t)).sum()
    }

    fn sequence(&self, text: &str) -> Vec<u32> {
        let mut ids = self.tokenizer.encode(text);
        ids.push(self.eos());
        ids
    }

    /// Scores all tokens of the document (EOS excluded).
    pub fn cross_entropy(&self, doc: &Document) -> Result<Score, OracleError> {
        self.score(doc, false)
    }

    /// With `output_only`, only tokens starting at or after the byte offset
    /// in `meta.output_offset` are scored; earlier tokens still serve as
    /// context. Documents without the key are scored in full.
    pub fn score(&self, doc: &Document, output_only: bool) -> Result<Score, OracleError> {
        let seq = self.sequence(&doc.text);
        let nll = self.counts.nll(&seq);
        let n_tokens = seq.len() - 1;
        let first = if output_only { self.output_start(doc, &seq[..n_tokens])? } else { 0 };
        let scored = &nll[first..n_tokens];
        if scored.is_empty() {
            return Err(OracleError::EmptyTokenization(doc.id.clone()));
        }
        let total: f64 = scored.iter().sum();
        Ok(Score {
            entropy: total / scored.len() as f64,
            tokens: scored.len(),
            nll: total,
        })
    }

    fn output_start(&self, doc: &Document, tokens: &[u32]) -> Result<usize, OracleError> {
        let Some(raw) = doc.meta.get(OUTPUT_OFFSET_KEY) else {
            return Ok(0);
        };
        let bad = |message: String| OracleError::BadOutputOffset {
            id: doc.id.clone(),
            message,
        };
        let offset: usize = raw.parse().map_err(|_| bad(format!("{OUTPUT_OFFSET_KEY} {raw:?} is not a byte offset")))?;
        if offset > doc.text.len() {
            return Err(bad(format!("{OUTPUT_OFFSET_KEY} {offset} exceeds text length {}", doc.text.len())));
        }
        let mut start = 0;
        for (i, &t) in tokens.iter().enumerate() {
            if start >= offset {
                return Ok(i);
            }
            start += self.tokenizer.token_bytes(t).map_or(0, <[u8]>::len);
        }
        Ok(tokens.len())
    }

    pub fn to_json(&self) -> Result<String, OracleError> {
        let mut contexts: Vec<(Vec<u32>, Vec<(u32, u64)>)> = self
            .counts
            .table
            .iter()
            .map(|(ctx, c)| {
                let mut next: Vec<(u32, u64)> = c.next.iter().map(|(t, n)| (*t, *n)).collect();
                next.sort_unstable();
                (ctx.clone(), next)
            })
            .collect();
        contexts.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let file = ModelFile {
            order: self.counts.order,
            alpha: self.counts.alpha,
            tokenizer: serde_json::from_str(&self.tokenizer.to_json()?)?,
            contexts,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self, OracleError> {
        let file: ModelFile = serde_json::from_str(json)?;
        let tokenizer = BpeModel::from_json(&file.tokenizer.to_string())?;
        let mut counts = NgramCounts::new(file.order, file.alpha, tokenizer.vocab_size() as u32 + 1)?;
        for (ctx, next) in file.contexts {
            let entry = ContextCounts {
                total: next.iter().map(|(_, n)| n).sum(),
                next: next.into_iter().collect(),
            };
            counts.table.insert(ctx, entry);
        }
        Ok(NgramModel { counts, tokenizer })
    }
}

pub fn train_ngram(corpus: &[Document], order: usize, alpha: f64, tokenizer: &BpeModel) -> Result<NgramModel, OracleError> {
    let empty = NgramCounts::new(order, alpha, tokenizer.vocab_size() as u32 + 1)?;
    if corpus.is_empty() {
        return Err(OracleError::EmptyCorpus);
    }
    let eos = tokenizer.vocab_size() as u32;
    let counts = corpus
        .par_iter()
        .fold(
            || empty.clone(),
            |mut acc, doc| {
                let mut ids = tokenizer.encode(&doc.text);
                ids.push(eos);
                acc.observe(&ids);
                acc
            },
        )
        .reduce(|| empty.clone(), NgramCounts::merge);
    Ok(NgramModel {
        counts,
        tokenizer: tokenizer.clone(),
    })
}

/// Token-weighted cross-entropy of `model` over `docs`; documents with no
/// tokens are skipped. Returns (entropy, scored tokens).
pub fn corpus_cross_entropy(model: &NgramModel, docs: &[Document]) -> (f64, usize) {
    let (nll, tokens) = docs
        .par_iter()
        .filter_map(|d| model.cross_entropy(d).ok())
        .map(|s| (s.nll, s.tokens))
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (if tokens == 0 { f64::NAN } else { nll / tokens as f64 }, tokens)
}

/// Seeded train/held-out split. The permutation depends only on the seed
/// and the number of documents. Needs at least 2 documents.
pub fn split_holdout(docs: &[Document], fraction: f64, seed: u64) -> Option<(Vec<Document>, Vec<Document>)> {
    if docs.len() < 2 {
        return None;
    }
    let held = ((docs.len() as f64 * fraction).round() as usize).clamp(1, docs.len() - 1);
    let mut idx: Vec<usize> = (0..docs.len()).collect();
    idx.shuffle(&mut rng_for(seed, "oracle/holdout"));
    let (h, t) = idx.split_at(held);
    let pick = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        ix.into_iter().map(|i| docs[i].clone()).collect::<Vec<_>>()
    };
    Some((pick(t), pick(h)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityMatrix {
    pub sources: Vec<String>,
    /// `cells[i][j]`: perplexity of the model trained on source i over the
    /// held-out part of source j.
    pub cells: Vec<Vec<f64>>,
    pub cross_entropy: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixConfig {
    pub order: usize,
    pub alpha: f64,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            holdout: DEFAULT_HOLDOUT,
            seed: 0,
        }
    }
}

pub fn perplexity_matrix(
    sources: &[(String, Vec<Document>)],
    cfg: &MatrixConfig,
    tokenizer: &BpeModel,
) -> Result<PerplexityMatrix, OracleError> {
    if sources.len() < 2 {
        return Err(OracleError::TooFewSources(sources.len()));
    }
    let mut splits = Vec::with_capacity(sources.len());
    for (label, docs) in sources {
        let (train, held) = split_holdout(docs, cfg.holdout, cfg.seed).ok_or_else(|| OracleError::SourceTooSmall(label.clone()))?;
        if held.iter().all(|d| d.text.is_empty()) {
            return Err(OracleError::SourceTooSmall(label.clone()));
        }
        splits.push((train, held));
    }
    let models = splits
        .iter()
        .map(|(train, _)| train_ngram(train, cfg.order, cfg.alpha, tokenizer))
        .collect::<Result<Vec<_>, _>>()?;
    let cross_entropy: Vec<Vec<f64>> = models
        .iter()
        .map(|m| splits.iter().map(|(_, held)| corpus_cross_entropy(m, held).0).collect())
        .collect();
    let cells = cross_entropy.iter().map(|row| row.iter().map(|h| h.exp()).collect()).collect();
    Ok(PerplexityMatrix {
        sources: sources.iter().map(|(l, _)| l.clone()).collect(),
        cells,
        cross_entropy,
    })
}

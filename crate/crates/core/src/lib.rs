//! Building blocks for curating LLM training corpora.
//!
//! - [`cleaner`]: format cleaning, density and CJK filtering, PII redaction,
//!   self-repeat filtering
//! - [`dedup`]: SimHash fingerprints with exact banded near-duplicate lookup
//! - [`bpe`]: byte-level BPE for token accounting
//! - [`mixer`]: weighted category sampling and shuffled/blocked layouts
//! - [`scaling`]: `L = a·ln C + L∞` fitting and loss prediction
//! - [`oracle`]: add-α n-gram LM for per-sample entropy and cross-source perplexity
//! - [`selector`]: 1-D K-means over entropies, cluster filtering, entropy-band selection
//! - [`elo`]: ranking-to-pairwise expansion and Elo tournaments
//! - [`testkit`]: synthetic fixtures with ground-truth labels and brute-force oracles

pub mod bpe;
pub mod cleaner;
pub mod config;
pub mod dedup;
pub mod document;
pub mod elo;
pub mod jsonl;
pub mod mixer;
pub mod oracle;
pub mod scaling;
pub mod seed;
pub mod selector;
pub mod testkit;

pub use bpe::BpeModel;
pub use config::{ConfigError, PipelineConfig};
pub use document::{compute_stats, CorpusStats, Document, Lang};

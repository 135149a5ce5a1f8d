//! Run configuration shared by the cleaning, dedup and mixing stages.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::Lang;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Overrides for the PII patterns. `None` keeps the built-in pattern.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PiiPatterns {
    pub id: Option<String>,
    pub phone: Option<String>,
    pub email: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Minimum kept text density (content chars / raw chars), inclusive.
    pub density_threshold: f64,
    /// Minimum count of CJK ideographs for `zh` documents, inclusive.
    pub min_cjk_chars: usize,
    pub simhash_hamming_threshold: u32,
    /// Phrase length for the self-repeat filter. When unset, 10 characters
    /// for `zh` and 5 whitespace tokens otherwise.
    pub repeat_phrase_len: Option<usize>,
    pub repeat_count_threshold: usize,
    pub mixture_weights: BTreeMap<String, f64>,
    pub seed: u64,

    /// Character shingle length for SimHash.
    pub shingle_len: usize,
    pub pii_patterns: PiiPatterns,
    /// Newline-separated sensitive-word list. Unset means no word filter.
    pub sensitive_vocab: Option<PathBuf>,
    /// Documents with at least this many vocabulary hits are dropped.
    pub sensitive_hit_threshold: usize,
    /// Fraction of characters flagged as garbled at which a document is
    /// dropped before format cleaning.
    pub garble_ratio_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            density_threshold: 0.75,
            min_cjk_chars: 100,
            simhash_hamming_threshold: 3,
            repeat_phrase_len: None,
            repeat_count_threshold: 5,
            mixture_weights: BTreeMap::new(),
            seed: 0,
            shingle_len: 4,
            pii_patterns: PiiPatterns::default(),
            sensitive_vocab: None,
            sensitive_hit_threshold: 1,
            garble_ratio_threshold: 0.05,
        }
    }
}

pub const DEFAULT_REPEAT_LEN_ZH: usize = 10;
pub const DEFAULT_REPEAT_LEN_EN: usize = 5;

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.density_threshold) {
            return Err(ConfigError(format!(
                "density_threshold must be in [0, 1], got {}",
                self.density_threshold
            )));
        }
        if self.simhash_hamming_threshold > crate::dedup::MAX_THRESHOLD {
            return Err(ConfigError(format!(
                "simhash_hamming_threshold must be at most {}, got {}",
                crate::dedup::MAX_THRESHOLD,
                self.simhash_hamming_threshold
            )));
        }
        if self.repeat_phrase_len == Some(0) {
            return Err(ConfigError("repeat_phrase_len must be positive".into()));
        }
        if self.repeat_count_threshold < 2 {
            return Err(ConfigError("repeat_count_threshold must be at least 2".into()));
        }
        if self.shingle_len == 0 {
            return Err(ConfigError("shingle_len must be positive".into()));
        }
        if self.sensitive_hit_threshold == 0 {
            return Err(ConfigError("sensitive_hit_threshold must be at least 1".into()));
        }
        if !(self.garble_ratio_threshold > 0.0 && self.garble_ratio_threshold <= 1.0) {
            return Err(ConfigError("garble_ratio_threshold must be in (0, 1]".into()));
        }
        if !self.mixture_weights.is_empty() {
            validate_weights(&self.mixture_weights)?;
        }
        Ok(())
    }

    pub fn repeat_phrase_len_for(&self, lang: Lang) -> usize {
        self.repeat_phrase_len.unwrap_or(match lang {
            Lang::Zh => DEFAULT_REPEAT_LEN_ZH,
            _ => DEFAULT_REPEAT_LEN_EN,
        })
    }
}

/// All weights finite and non-negative, at least one positive.
pub fn validate_weights(weights: &BTreeMap<String, f64>) -> Result<(), ConfigError> {
    if let Some((k, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(ConfigError(format!("weight for {k} must be finite and non-negative, got {w}")));
    }
    if !weights.values().any(|w| *w > 0.0) {
        return Err(ConfigError("at least one mixture weight must be positive".into()));
    }
    Ok(())
}

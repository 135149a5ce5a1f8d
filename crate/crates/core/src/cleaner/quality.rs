//! Text-density and Chinese-character-count filtering.

use serde::{Deserialize, Serialize};

use super::{Decision, DropReason};
use crate::config::PipelineConfig;
use crate::document::{Document, Lang};

/// CJK Unified Ideographs, the main block and extensions A through H.
/// Compatibility ideographs, kana and hangul are not counted.
pub fn is_cjk_ideograph(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x30000..=0x323AF)
}

pub fn count_cjk(text: &str) -> usize {
    text.chars().filter(|c| is_cjk_ideograph(*c)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub content_chars: usize,
    pub raw_chars: usize,
    pub cjk_count: usize,
}

impl DensityProfile {
    /// Reads `meta.raw_length` (characters of the pre-extraction page) when
    /// present; otherwise the text is its own source and density is 1.
    pub fn of(doc: &Document) -> Result<Self, String> {
        let content_chars = doc.text.chars().count();
        let raw_chars = match doc.meta.get("raw_length") {
            Some(raw) => raw
                .trim()
                .parse::<usize>()
                .map_err(|e| format!("raw_length {raw:?}: {e}"))?,
            None => content_chars,
        };
        Ok(Self {
            content_chars,
            raw_chars,
            cjk_count: count_cjk(&doc.text),
        })
    }

    /// `None` when there is no source text to measure against.
    pub fn density(&self) -> Option<f64> {
        if self.raw_chars == 0 {
            return None;
        }
        Some((self.content_chars as f64 / self.raw_chars as f64).min(1.0))
    }
}

/// Drops pages below the density threshold and `zh` pages with too few
/// Chinese characters. Both thresholds are inclusive.
pub fn filter_low_quality(doc: &Document, profile: &DensityProfile, cfg: &PipelineConfig) -> Decision {
    let Some(density) = profile.density() else {
        return Decision::Drop(DropReason::EmptySource);
    };
    if density < cfg.density_threshold {
        return Decision::Drop(DropReason::Density);
    }
    if doc.lang == Lang::Zh && profile.cjk_count < cfg.min_cjk_chars {
        return Decision::Drop(DropReason::Cjk);
    }
    Decision::Keep
}

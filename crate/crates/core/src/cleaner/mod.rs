//! Per-document cleaning pipeline.
//!
//! Stages run in this order for each document:
//!
//! 1. garble check on the raw text (decoding damage, known garbage strings)
//! 2. format cleaning ([`clean_format`])
//! 3. low-quality filter on text density and Chinese character count
//! 4. PII redaction and sensitive-word filter
//! 5. self-repeat filter
//!
//! Every stage is a pure function of one document and the config, so the
//! stream can be processed in parallel and the [`CleanReport`]s merged.

mod format;
mod quality;
mod redact;
mod repeat;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{clean_format, clean_text, garble_ratio};
pub use quality::{count_cjk, filter_low_quality, is_cjk_ideograph, DensityProfile};
pub use redact::{
    load_vocab, parse_vocab, RedactionCounts, Redactor, EMAIL_PATTERN, EMAIL_TOKEN, ID_PATTERN, ID_TOKEN,
    PHONE_PATTERN, PHONE_TOKEN,
};
pub use repeat::{filter_self_repeat, repeat_profile, RepeatProfile};

use crate::config::{ConfigError, PipelineConfig};
use crate::document::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Garbled,
    EmptySource,
    InvalidRawLength,
    Density,
    Cjk,
    Sensitive,
    SelfRepeat,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Garbled => "garbled",
            DropReason::EmptySource => "empty-source",
            DropReason::InvalidRawLength => "invalid-raw-length",
            DropReason::Density => "density",
            DropReason::Cjk => "cjk",
            DropReason::Sensitive => "sensitive",
            DropReason::SelfRepeat => "self-repeat",
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            DropReason::Garbled => Stage::Format,
            DropReason::EmptySource | DropReason::InvalidRawLength | DropReason::Density | DropReason::Cjk => {
                Stage::LowQuality
            }
            DropReason::Sensitive => Stage::Sensitive,
            DropReason::SelfRepeat => Stage::SelfRepeat,
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Format,
    LowQuality,
    Sensitive,
    SelfRepeat,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Format => "format",
            Stage::LowQuality => "low-quality",
            Stage::Sensitive => "sensitive",
            Stage::SelfRepeat => "self-repeat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Drop(DropReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CleanOutcome {
    Kept {
        doc: Document,
        redactions: RedactionCounts,
    },
    Dropped {
        /// The document as it arrived, before any cleaning.
        original: Document,
        reason: DropReason,
        redactions: RedactionCounts,
    },
}

impl CleanOutcome {
    pub fn redactions(&self) -> &RedactionCounts {
        match self {
            CleanOutcome::Kept { redactions, .. } | CleanOutcome::Dropped { redactions, .. } => redactions,
        }
    }
}

/// A rejected document as written to the rejects file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    #[serde(flatten)]
    pub doc: Document,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_by_stage: BTreeMap<String, u64>,
    pub dropped_by_reason: BTreeMap<String, u64>,
    pub redaction_counts: RedactionCounts,
}

impl CleanReport {
    pub fn record(&mut self, outcome: &CleanOutcome) {
        self.input_count += 1;
        match outcome {
            CleanOutcome::Kept { .. } => self.kept_count += 1,
            CleanOutcome::Dropped { reason, .. } => {
                *self.dropped_by_stage.entry(reason.stage().as_str().to_string()).or_default() += 1;
                *self.dropped_by_reason.entry(reason.as_str().to_string()).or_default() += 1;
            }
        }
        self.redaction_counts.add(outcome.redactions());
    }

    pub fn dropped_count(&self) -> u64 {
        self.dropped_by_stage.values().sum()
    }

    pub fn merge(mut self, other: CleanReport) -> CleanReport {
        self.input_count += other.input_count;
        self.kept_count += other.kept_count;
        for (k, v) in other.dropped_by_stage {
            *self.dropped_by_stage.entry(k).or_default() += v;
        }
        for (k, v) in other.dropped_by_reason {
            *self.dropped_by_reason.entry(k).or_default() += v;
        }
        self.redaction_counts.add(&other.redaction_counts);
        self
    }
}

/// Redacts PII and applies the sensitive-word filter.
pub fn redact_sensitive(doc: Document, redactor: &Redactor) -> (Document, RedactionCounts, Decision) {
    let (text, counts) = redactor.redact(&doc.text);
    let decision = if redactor.is_sensitive(&text) {
        Decision::Drop(DropReason::Sensitive)
    } else {
        Decision::Keep
    };
    (Document { text, ..doc }, counts, decision)
}

#[derive(Debug, Clone)]
pub struct Cleaner {
    cfg: PipelineConfig,
    redactor: Redactor,
}

impl Cleaner {
    /// Validates the config and loads the sensitive vocabulary.
    pub fn new(cfg: PipelineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let redactor = Redactor::from_config(&cfg)?;
        Ok(Self { cfg, redactor })
    }

    pub fn with_redactor(cfg: PipelineConfig, redactor: Redactor) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self { cfg, redactor })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn redactor(&self) -> &Redactor {
        &self.redactor
    }

    pub fn process(&self, original: Document) -> CleanOutcome {
        let drop = |original: Document, reason, redactions| CleanOutcome::Dropped {
            original,
            reason,
            redactions,
        };
        let none = RedactionCounts::default();

        if garble_ratio(&original.text) >= self.cfg.garble_ratio_threshold {
            return drop(original, DropReason::Garbled, none);
        }
        let doc = clean_format(original.clone());

        let profile = match DensityProfile::of(&doc) {
            Ok(p) => p,
            Err(_) => return drop(original, DropReason::InvalidRawLength, none),
        };
        if let Decision::Drop(reason) = filter_low_quality(&doc, &profile, &self.cfg) {
            return drop(original, reason, none);
        }

        let (doc, redactions, decision) = redact_sensitive(doc, &self.redactor);
        if let Decision::Drop(reason) = decision {
            return drop(original, reason, redactions);
        }
        if let Decision::Drop(reason) = filter_self_repeat(&doc, &self.cfg) {
            return drop(original, reason, redactions);
        }
        CleanOutcome::Kept { doc, redactions }
    }
}

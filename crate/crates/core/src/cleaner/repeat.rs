//! Self-repeating content filter.
//!
//! Counts every contiguous phrase of `n` units (non-whitespace characters
//! for `zh`, whitespace tokens otherwise). A phrase is advertising-style
//! repetition when it occurs at least `threshold` times and at least half
//! of those occurrences form one chain in which each occurrence starts no
//! more than `CHAIN_GAP_FACTOR · n` units after the previous one, so an ad
//! of up to that many units repeated back to back forms a chain. Phrases
//! repeated across a document with prose in between are left alone.

use std::collections::HashMap;

use super::{Decision, DropReason};
use crate::config::PipelineConfig;
use crate::document::{Document, Lang};

pub const CHAIN_GAP_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepeatProfile {
    /// Highest occurrence count of any phrase.
    pub max_count: usize,
    /// Longest back-to-back chain among phrases reaching the threshold.
    pub longest_run: usize,
    /// Occurrence count of the phrase owning `longest_run`.
    pub run_phrase_count: usize,
}

fn units(text: &str, lang: Lang) -> Vec<&str> {
    match lang {
        Lang::Zh => text
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| &text[i..i + c.len_utf8()])
            .collect(),
        _ => text.split_whitespace().collect(),
    }
}

fn longest_chain(positions: &[usize], phrase_len: usize) -> usize {
    let mut best = 1;
    let mut run = 1;
    for w in positions.windows(2) {
        if w[1] - w[0] <= CHAIN_GAP_FACTOR * phrase_len {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    best
}

/// `None` when the text has fewer units than one phrase.
pub fn repeat_profile(text: &str, lang: Lang, phrase_len: usize, threshold: usize) -> Option<RepeatProfile> {
    let units = units(text, lang);
    if phrase_len == 0 || units.len() < phrase_len {
        return None;
    }
    let mut positions: HashMap<&[&str], Vec<usize>> = HashMap::new();
    for (start, window) in units.windows(phrase_len).enumerate() {
        positions.entry(window).or_default().push(start);
    }
    let mut profile = RepeatProfile {
        max_count: 0,
        longest_run: 0,
        run_phrase_count: 0,
    };
    for pos in positions.values() {
        profile.max_count = profile.max_count.max(pos.len());
        if pos.len() >= threshold {
            let run = longest_chain(pos, phrase_len);
            // prefer the chain that most dominates its phrase's count
            if 2 * run >= pos.len() && run > profile.longest_run {
                profile.longest_run = run;
                profile.run_phrase_count = pos.len();
            }
        }
    }
    Some(profile)
}

pub fn filter_self_repeat(doc: &Document, cfg: &PipelineConfig) -> Decision {
    let phrase_len = cfg.repeat_phrase_len_for(doc.lang);
    match repeat_profile(&doc.text, doc.lang, phrase_len, cfg.repeat_count_threshold) {
        Some(p) if p.run_phrase_count >= cfg.repeat_count_threshold => Decision::Drop(DropReason::SelfRepeat),
        _ => Decision::Keep,
    }
}

//! PII replacement and sensitive-word filtering.
//!
//! Built-in patterns:
//!
//! | kind  | pattern                                                         | token     |
//! |-------|-----------------------------------------------------------------|-----------|
//! | email | `local@domain.tld`                                              | `<EMAIL>` |
//! | id    | mainland-China 18-digit resident ID (region, birth date, check) | `<ID>`    |
//! | phone | CN mobile with optional `+86`, `+CC` international, CN landline | `<PHONE>` |
//!
//! Digit patterns only match when not embedded in a longer digit run.
//! Emails are replaced first so digits inside an address are not taken
//! for a phone number.

use std::fs;
use std::path::Path;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, PiiPatterns, PipelineConfig};

pub const EMAIL_PATTERN: &str = r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}";
pub const ID_PATTERN: &str =
    r"[1-9]\d{5}(?:18|19|20)\d{2}(?:0[1-9]|1[0-2])(?:0[1-9]|[12]\d|3[01])\d{3}[\dXx]";
pub const PHONE_PATTERN: &str = concat!(
    r"(?:\+?86[\s-]?)?1[3-9]\d(?:[\s-]?\d{4}){2}",
    r"|\+\d{1,3}[\s-]?\(?\d{1,4}\)?(?:[\s-]?\d{2,4}){2,4}",
    r"|\b0\d{2,3}-\d{7,8}",
);

pub const EMAIL_TOKEN: &str = "<EMAIL>";
pub const ID_TOKEN: &str = "<ID>";
pub const PHONE_TOKEN: &str = "<PHONE>";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionCounts {
    pub id: u64,
    pub phone: u64,
    pub email: u64,
}

impl RedactionCounts {
    pub fn total(&self) -> u64 {
        self.id + self.phone + self.email
    }

    pub fn add(&mut self, other: &RedactionCounts) {
        self.id += other.id;
        self.phone += other.phone;
        self.email += other.email;
    }
}

#[derive(Debug, Clone)]
pub struct Redactor {
    email: Regex,
    id: Regex,
    phone: Regex,
    vocab: Option<AhoCorasick>,
    hit_threshold: usize,
}

fn compile(name: &str, pattern: &str) -> Result<Regex, ConfigError> {
    Regex::new(pattern).map_err(|e| ConfigError(format!("{name} pattern: {e}")))
}

/// Parses a word list: one entry per line, `#` comments and blank lines ignored.
pub fn parse_vocab(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn load_vocab(path: &Path) -> Result<Vec<String>, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("sensitive vocabulary {}: {e}", path.display())))?;
    Ok(parse_vocab(&text))
}

impl Redactor {
    pub fn new(patterns: &PiiPatterns, vocab: Vec<String>, hit_threshold: usize) -> Result<Self, ConfigError> {
        let vocab = if vocab.is_empty() {
            None
        } else {
            Some(
                AhoCorasickBuilder::new()
                    .match_kind(MatchKind::LeftmostLongest)
                    .ascii_case_insensitive(true)
                    .build(&vocab)
                    .map_err(|e| ConfigError(format!("sensitive vocabulary: {e}")))?,
            )
        };
        Ok(Self {
            email: compile("email", patterns.email.as_deref().unwrap_or(EMAIL_PATTERN))?,
            id: compile("id", patterns.id.as_deref().unwrap_or(ID_PATTERN))?,
            phone: compile("phone", patterns.phone.as_deref().unwrap_or(PHONE_PATTERN))?,
            vocab,
            hit_threshold: hit_threshold.max(1),
        })
    }

    /// Builds from config, reading the vocabulary file if one is named.
    /// A named but missing file is a configuration error.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        let vocab = match &cfg.sensitive_vocab {
            Some(path) => load_vocab(path)?,
            None => Vec::new(),
        };
        Self::new(&cfg.pii_patterns, vocab, cfg.sensitive_hit_threshold)
    }

    /// Replaces PII until a pass finds nothing more, so applying it to its
    /// own output is a no-op.
    pub fn redact(&self, text: &str) -> (String, RedactionCounts) {
        let mut counts = RedactionCounts::default();
        let mut current = text.to_string();
        loop {
            let (next, pass) = self.redact_once(&current);
            if pass.total() == 0 {
                return (current, counts);
            }
            counts.add(&pass);
            current = next;
        }
    }

    fn redact_once(&self, text: &str) -> (String, RedactionCounts) {
        let mut counts = RedactionCounts::default();
        let (text, n) = replace_all(&self.email, text, EMAIL_TOKEN, false);
        counts.email = n;
        let (text, n) = replace_all(&self.id, &text, ID_TOKEN, true);
        counts.id = n;
        let (text, n) = replace_all(&self.phone, &text, PHONE_TOKEN, true);
        counts.phone = n;
        (text, counts)
    }

    pub fn sensitive_hits(&self, text: &str) -> usize {
        self.vocab.as_ref().map_or(0, |ac| ac.find_iter(text).count())
    }

    pub fn is_sensitive(&self, text: &str) -> bool {
        self.vocab.is_some() && self.sensitive_hits(text) >= self.hit_threshold
    }

    /// Number of PII matches left in `text`; zero on any redacted output.
    pub fn scan(&self, text: &str) -> u64 {
        self.redact_once(text).1.total()
    }
}

/// Replaces matches of `re`. With `digit_bounded`, a match touching an
/// ASCII digit on either side is skipped and the search resumes one
/// character later.
fn replace_all(re: &Regex, text: &str, token: &str, digit_bounded: bool) -> (String, u64) {
    let mut out = String::with_capacity(text.len());
    let mut copied = 0;
    let mut search = 0;
    let mut count = 0;
    while search <= text.len() {
        let Some(m) = re.find_at(text, search) else { break };
        if m.is_empty() {
            search = next_boundary(text, m.end());
            continue;
        }
        let before = text[..m.start()].chars().next_back();
        let after = text[m.end()..].chars().next();
        let touches_digit = before.is_some_and(|c| c.is_ascii_digit()) || after.is_some_and(|c| c.is_ascii_digit());
        if digit_bounded && touches_digit {
            search = next_boundary(text, m.start());
            continue;
        }
        out.push_str(&text[copied..m.start()]);
        out.push_str(token);
        copied = m.end();
        search = m.end();
        count += 1;
    }
    out.push_str(&text[copied..]);
    (out, count)
}

fn next_boundary(text: &str, from: usize) -> usize {
    text[from..].chars().next().map_or(text.len() + 1, |c| from + c.len_utf8())
}

//! Corpus records and per-category statistics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bpe::BpeModel;
use crate::jsonl::RecordError;

/// Source categories used for the reference pre-training mixture.
///
/// The category set is open: any non-empty label is accepted as a
/// `source`, these are just the documented canonical names.
pub const CANONICAL_CATEGORIES: [&str; 9] = [
    "Academic",
    "Book",
    "Code",
    "Encyclopedia",
    "Math",
    "QA",
    "Webtext",
    "Dialogue",
    "Technology",
];

/// Language tag carried by every document. Language is never detected,
/// only read from the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Zh,
    En,
    Other,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Zh => "zh",
            Lang::En => "en",
            Lang::Other => "other",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One corpus record.
///
/// `meta` values are always strings; numeric attributes such as
/// `raw_length` are parsed where they are used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: String,
    pub lang: Lang,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: impl Into<String>, lang: Lang) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            source: source.into(),
            lang,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Checks the record-level invariants that deserialization alone cannot.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".to_string());
        }
        if self.source.is_empty() {
            return Err(format!("document {} has an empty source", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub docs: u64,
    /// UTF-8 byte length of `text`.
    pub bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
}

/// A record that could not be read, kept so the summary can list it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: u64,
    pub id: Option<String>,
    pub error: String,
}

impl From<&RecordError> for SkippedRecord {
    fn from(err: &RecordError) -> Self {
        Self {
            line: err.line,
            id: err.id.clone(),
            error: err.message.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub categories: BTreeMap<String, CategoryStats>,
    pub total_docs: u64,
    pub total_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
    pub skipped: Vec<SkippedRecord>,
}

impl CorpusStats {
    /// Empty stats; `with_tokens` decides whether token columns are tracked.
    pub fn empty(with_tokens: bool) -> Self {
        Self {
            total_tokens: with_tokens.then_some(0),
            ..Self::default()
        }
    }

    pub fn add(&mut self, doc: &Document, tokens: Option<u64>) {
        let bytes = doc.text.len() as u64;
        let entry = self.categories.entry(doc.source.clone()).or_default();
        entry.docs += 1;
        entry.bytes += bytes;
        self.total_docs += 1;
        self.total_bytes += bytes;
        if let Some(t) = tokens {
            *entry.tokens.get_or_insert(0) += t;
            *self.total_tokens.get_or_insert(0) += t;
        }
    }

    pub fn skip(&mut self, err: &RecordError) {
        self.skipped.push(SkippedRecord::from(err));
    }

    /// Commutative merge of two partial aggregates. Skipped records are
    /// kept sorted by line so merge order does not leak into the output.
    pub fn merge(mut self, other: CorpusStats) -> CorpusStats {
        for (cat, s) in other.categories {
            let entry = self.categories.entry(cat).or_default();
            entry.docs += s.docs;
            entry.bytes += s.bytes;
            entry.tokens = match (entry.tokens, s.tokens) {
                (None, None) => None,
                (a, b) => Some(a.unwrap_or(0) + b.unwrap_or(0)),
            };
        }
        self.total_docs += other.total_docs;
        self.total_bytes += other.total_bytes;
        self.total_tokens = match (self.total_tokens, other.total_tokens) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0) + b.unwrap_or(0)),
        };
        self.skipped.extend(other.skipped);
        self.skipped.sort_by(|a, b| a.line.cmp(&b.line).then_with(|| a.id.cmp(&b.id)));
        self
    }

    pub fn docs_in(&self, category: &str) -> u64 {
        self.categories.get(category).map_or(0, |c| c.docs)
    }

    pub fn bytes_in(&self, category: &str) -> u64 {
        self.categories.get(category).map_or(0, |c| c.bytes)
    }
}

/// Single pass over a record stream. Malformed records are listed in
/// `skipped` and the pass continues.
pub fn compute_stats<I>(corpus: I, tokenizer: Option<&BpeModel>) -> CorpusStats
where
    I: IntoIterator<Item = Result<Document, RecordError>>,
{
    let mut stats = CorpusStats::empty(tokenizer.is_some());
    for record in corpus {
        match record {
            Ok(doc) => {
                let tokens = tokenizer.map(|t| t.count_tokens(&doc.text) as u64);
                stats.add(&doc, tokens);
            }
            Err(err) => stats.skip(&err),
        }
    }
    stats
}

//! Synthetic corpora with ground-truth labels, and brute-force oracles.
//!
//! Generated documents are random prose (pseudo-words for `en`, CJK
//! ideographs for `zh`), so unrelated documents sit about 32 bits apart in
//! SimHash space. Planted defects are recorded in the labels.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dedup::{hamming, simhash, DuplicatePair, DEFAULT_SHINGLE_LEN};
use crate::document::{Document, Lang, CANONICAL_CATEGORIES};
use crate::seed::rng_for;

/// Largest corpus the quadratic oracle accepts.
pub const BRUTE_FORCE_CAP: usize = 5_000;

const EDIT_ATTEMPTS: usize = 64;
const EN_SPAM: &str = "buy now limited offer click here";
const ZH_SPAM: &str = "限时特价快来抢购吧";
const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "sta", "vo", "quen", "dra", "pel", "tor", "nis", "ba", "ju", "fe", "gar", "hol", "in", "ze", "wy",
    "cor", "ul", "ost", "bri", "mae",
];

#[derive(Debug, Error, PartialEq)]
pub enum TestkitError {
    #[error("brute-force oracle is capped at {cap} documents, got {got}")]
    TooLarge { cap: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    /// Total documents, planted copies included.
    pub docs: usize,
    pub categories: Vec<String>,
    pub zh_fraction: f64,
    pub duplicate_plants: usize,
    /// Maximum SimHash distance between an original and its planted copy.
    pub perturbation_bits: u32,
    pub pii_plants: usize,
    pub spam_plants: usize,
    pub shingle_len: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            docs: 100,
            categories: CANONICAL_CATEGORIES.iter().map(|c| c.to_string()).collect(),
            zh_fraction: 0.4,
            duplicate_plants: 0,
            perturbation_bits: 3,
            pii_plants: 0,
            spam_plants: 0,
            shingle_len: DEFAULT_SHINGLE_LEN,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureLabel {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
    pub contains_pii: bool,
    pub is_spam: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub docs: Vec<Document>,
    pub labels: Vec<FixtureLabel>,
}

impl Fixture {
    /// (original, copy) id pairs of the planted near-duplicates.
    pub fn duplicate_pairs(&self) -> Vec<(String, String)> {
        self.labels
            .iter()
            .filter_map(|l| l.duplicate_of.as_ref().map(|o| (o.clone(), l.id.clone())))
            .collect()
    }
}

pub fn random_en_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        let n = rng.random_range(1..=3);
        let mut w: String = (0..n).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
        if i == 0 || out.ends_with(". ") {
            w[..1].make_ascii_uppercase();
        }
        out.push_str(&w);
        out.push_str(if i + 1 == words {
            "."
        } else if rng.random_bool(0.1) {
            ". "
        } else if rng.random_bool(0.08) {
            ", "
        } else {
            " "
        });
    }
    out
}

pub fn random_zh_text(rng: &mut ChaCha8Rng, chars: usize) -> String {
    let mut out = String::new();
    for i in 0..chars {
        out.push(char::from_u32(rng.random_range(0x4E00..0x9FA6)).expect("valid ideograph"));
        if i + 1 == chars {
            out.push('。');
        } else if rng.random_bool(0.07) {
            out.push(if rng.random_bool(0.5) { '，' } else { '。' });
        }
    }
    out
}

fn pii_snippet(rng: &mut ChaCha8Rng, lang: Lang) -> String {
    let mobile = format!("13{:09}", rng.random_range(0..1_000_000_000u64));
    let email = format!("user{}@example.com", rng.random_range(0..100_000));
    match (lang, rng.random_range(0..3)) {
        (Lang::Zh, 0) => format!("联系电话：{mobile}。"),
        (Lang::Zh, 1) => format!("邮箱：{email}。"),
        (Lang::Zh, _) => format!("身份证号：11010519491231002X。"),
        (_, 0) => format!("Call {mobile} today."),
        (_, 1) => format!("Write to {email} for details."),
        (_, _) => format!("Reference 11010519491231002X on file."),
    }
}

fn spam_snippet(lang: Lang) -> String {
    match lang {
        Lang::Zh => ZH_SPAM.repeat(8),
        _ => vec![EN_SPAM; 8].join(" "),
    }
}

/// Replaces one random word (`en`) or ideograph (`zh`).
fn perturb(rng: &mut ChaCha8Rng, text: &str, lang: Lang) -> String {
    match lang {
        Lang::Zh => {
            let positions: Vec<(usize, char)> = text.char_indices().filter(|(_, c)| ('\u{4E00}'..='\u{9FA5}').contains(c)).collect();
            let (at, old) = positions[rng.random_range(0..positions.len())];
            let new = char::from_u32(rng.random_range(0x4E00..0x9FA6)).expect("valid ideograph");
            format!("{}{}{}", &text[..at], new, &text[at + old.len_utf8()..])
        }
        _ => {
            let mut words: Vec<String> = text.split(' ').map(String::from).collect();
            let i = rng.random_range(0..words.len());
            let tail: String = words[i].chars().filter(|c| !c.is_alphabetic()).collect();
            words[i] = format!("{}{}", SYLLABLES[rng.random_range(0..SYLLABLES.len())], tail);
            words.join(" ")
        }
    }
}

/// Deterministic in `spec`. Planted copies appear after their originals
/// and lie within `perturbation_bits` of them (an exact copy if no single
/// edit stays that close).
pub fn gen_corpus(spec: &FixtureSpec) -> Fixture {
    let mut rng = rng_for(spec.seed, "testkit/corpus");
    let copies = spec.duplicate_plants.min(spec.docs / 2);
    let originals = spec.docs - copies;
    let categories: Vec<String> = if spec.categories.is_empty() {
        vec!["Webtext".to_string()]
    } else {
        spec.categories.clone()
    };

    let pii: Vec<usize> = sample(&mut rng, originals, spec.pii_plants.min(originals)).into_vec();
    let spam: Vec<usize> = sample(&mut rng, originals, spec.spam_plants.min(originals)).into_vec();

    let mut docs = Vec::with_capacity(spec.docs);
    let mut labels = Vec::with_capacity(spec.docs);
    for i in 0..originals {
        let lang = if rng.random_bool(spec.zh_fraction.clamp(0.0, 1.0)) { Lang::Zh } else { Lang::En };
        let mut text = match lang {
            Lang::Zh => {
                let n = rng.random_range(120..320);
                random_zh_text(&mut rng, n)
            }
            _ => {
                let n = rng.random_range(40..120);
                random_en_text(&mut rng, n)
            }
        };
        let is_pii = pii.contains(&i);
        let is_spam = spam.contains(&i);
        if is_pii {
            let sep = if lang == Lang::Zh { "" } else { " " };
            text = format!("{text}{sep}{}", pii_snippet(&mut rng, lang));
        }
        if is_spam {
            let sep = if lang == Lang::Zh { "" } else { " " };
            text = format!("{text}{sep}{}", spam_snippet(lang));
        }
        let id = format!("fx-{i:06}");
        let category = &categories[rng.random_range(0..categories.len())];
        docs.push(Document::new(id.clone(), text, category.clone(), lang));
        labels.push(FixtureLabel {
            id,
            duplicate_of: None,
            contains_pii: is_pii,
            is_spam,
        });
    }

    let sources: Vec<usize> = sample(&mut rng, originals, copies).into_vec();
    for src in sources {
        let original = docs.iter().position(|d| d.id == format!("fx-{src:06}")).expect("originals are present");
        let base = docs[original].clone();
        let base_bits = simhash(&base.text, spec.shingle_len).expect("generated text is non-empty");
        let mut text = base.text.clone();
        for _ in 0..EDIT_ATTEMPTS {
            let candidate = perturb(&mut rng, &base.text, base.lang);
            if let Ok(bits) = simhash(&candidate, spec.shingle_len) {
                if hamming(bits, base_bits) <= spec.perturbation_bits {
                    text = candidate;
                    break;
                }
            }
        }
        let mut copy = base.clone();
        copy.id = format!("{}-dup", base.id);
        copy.text = text;
        let mut label = labels[original].clone();
        label.id = copy.id.clone();
        label.duplicate_of = Some(base.id.clone());
        let at = rng.random_range(original + 1..=docs.len());
        docs.insert(at, copy);
        labels.insert(at, label);
    }
    Fixture { docs, labels }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearPair {
    pub i: usize,
    pub j: usize,
    pub distance: u32,
}

/// Every pair `i < j` within `threshold` bits. Documents that cannot be
/// fingerprinted are ignored.
pub fn brute_force_near_dupes(docs: &[Document], threshold: u32, shingle_len: usize) -> Result<Vec<NearPair>, TestkitError> {
    if docs.len() > BRUTE_FORCE_CAP {
        return Err(TestkitError::TooLarge {
            cap: BRUTE_FORCE_CAP,
            got: docs.len(),
        });
    }
    let bits: Vec<Option<u64>> = docs.iter().map(|d| simhash(&d.text, shingle_len).ok()).collect();
    let mut out = Vec::new();
    for i in 0..docs.len() {
        let Some(a) = bits[i] else { continue };
        for j in i + 1..docs.len() {
            let Some(b) = bits[j] else { continue };
            let distance = hamming(a, b);
            if distance <= threshold {
                out.push(NearPair { i, j, distance });
            }
        }
    }
    Ok(out)
}

/// Greedy first-occurrence verdicts derived from the all-pairs list: a
/// document is dropped iff some earlier kept document is within range,
/// and is attributed to the earliest such document.
pub fn greedy_verdicts(docs: &[Document], pairs: &[NearPair]) -> Vec<DuplicatePair> {
    let mut earlier: BTreeMap<usize, Vec<(usize, u32)>> = BTreeMap::new();
    for p in pairs {
        earlier.entry(p.j).or_default().push((p.i, p.distance));
    }
    let mut dropped = vec![false; docs.len()];
    let mut out = Vec::new();
    for (j, mut cands) in earlier {
        cands.sort_unstable();
        if let Some(&(i, distance)) = cands.iter().find(|(i, _)| !dropped[*i]) {
            dropped[j] = true;
            out.push(DuplicatePair {
                kept_id: docs[i].id.clone(),
                dropped_id: docs[j].id.clone(),
                distance,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleaner::count_cjk;

    #[test]
    fn clean_spec_has_clean_labels() {
        let f = gen_corpus(&FixtureSpec::default());
        assert_eq!(f.docs.len(), 100);
        assert!(f.labels.iter().all(|l| l.duplicate_of.is_none() && !l.contains_pii && !l.is_spam));
        for d in f.docs.iter().filter(|d| d.lang == Lang::Zh) {
            assert!(count_cjk(&d.text) >= 100);
        }
    }

    #[test]
    fn planted_duplicates_are_listed() {
        let spec = FixtureSpec {
            docs: 200,
            duplicate_plants: 10,
            ..FixtureSpec::default()
        };
        let f = gen_corpus(&spec);
        let pairs = f.duplicate_pairs();
        assert_eq!(pairs.len(), 10);
        for (orig, copy) in &pairs {
            let a = f.docs.iter().position(|d| &d.id == orig).unwrap();
            let b = f.docs.iter().position(|d| &d.id == copy).unwrap();
            assert!(a < b);
            let d = hamming(simhash(&f.docs[a].text, 4).unwrap(), simhash(&f.docs[b].text, 4).unwrap());
            assert!(d <= 3);
        }
    }

    #[test]
    fn seed_changes_text_not_counts() {
        let spec = FixtureSpec {
            docs: 120,
            duplicate_plants: 5,
            pii_plants: 7,
            spam_plants: 3,
            ..FixtureSpec::default()
        };
        let a = gen_corpus(&spec);
        let b = gen_corpus(&FixtureSpec { seed: 9, ..spec.clone() });
        assert_eq!(a, gen_corpus(&spec));
        assert_ne!(a.docs[0].text, b.docs[0].text);
        let count = |f: &Fixture| {
            (
                f.labels.iter().filter(|l| l.duplicate_of.is_some()).count(),
                f.labels.iter().filter(|l| l.contains_pii && l.duplicate_of.is_none()).count(),
                f.labels.iter().filter(|l| l.is_spam && l.duplicate_of.is_none()).count(),
            )
        };
        assert_eq!(count(&a), (5, 7, 3));
        assert_eq!(count(&a), count(&b));
    }

    #[test]
    fn oracle_edges() {
        assert_eq!(brute_force_near_dupes(&[], 3, 4).unwrap(), vec![]);
        let f = gen_corpus(&FixtureSpec { docs: 12, ..FixtureSpec::default() });
        assert_eq!(brute_force_near_dupes(&f.docs, 64, 4).unwrap().len(), 66);
        let big: Vec<Document> = (0..5001).map(|i| Document::new(i.to_string(), "x", "S", Lang::En)).collect();
        assert!(matches!(brute_force_near_dupes(&big, 3, 4), Err(TestkitError::TooLarge { .. })));
    }
}

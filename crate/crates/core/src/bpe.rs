//! Byte-level BPE tokenizer for token accounting.
//!
//! The base alphabet is the 256 byte values, so every string encodes and
//! nothing maps to an unknown token. Text is first split into pieces (a
//! letter run, up to four Han characters, up to three digits, or a
//! punctuation run, each with at most one leading whitespace character)
//! and merges never cross piece boundaries.
//!
//! Training merges the most frequent adjacent pair until the target size
//! is reached or no pair occurs at least twice. Ties go to the pair whose
//! merged byte string sorts first, then to the lower `(left, right)` ids.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::OnceLock;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::Document;

pub const BYTE_ALPHABET: usize = 256;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("target vocabulary size must exceed {BYTE_ALPHABET}, got {0}")]
    TargetTooSmall(usize),
    #[error("unknown token id {id} at position {position}")]
    UnknownId { position: usize, id: u32 },
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("inconsistent model: {0}")]
    Corrupt(String),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn pretokenizer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\s?\p{Han}{1,4}|\s?[\p{L}\p{M}--\p{Han}]+|\s?\p{N}{1,3}|\s?[^\s\p{L}\p{M}\p{N}]+|\s+").unwrap()
    })
}

/// Splits text into the pieces merges operate within. Concatenating the
/// pieces gives back the input.
pub fn pretokenize(text: &str) -> impl Iterator<Item = &str> {
    pretokenizer().find_iter(text).map(|m| m.as_str())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    target_vocab_size: usize,
    merges: Vec<(u32, u32)>,
    vocab: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BpeModel {
    target_vocab_size: usize,
    merges: Vec<(u32, u32)>,
    tokens: Vec<Vec<u8>>,
    /// pair -> (rank, merged id)
    ranks: HashMap<(u32, u32), (u32, u32)>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.target_vocab_size == other.target_vocab_size && self.merges == other.merges
    }
}

impl BpeModel {
    /// The bare byte alphabet with no merges.
    pub fn byte_level() -> Self {
        Self::from_merges(BYTE_ALPHABET, Vec::new()).expect("no merges to validate")
    }

    pub fn from_merges(target_vocab_size: usize, merges: Vec<(u32, u32)>) -> Result<Self, BpeError> {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(l, r)) in merges.iter().enumerate() {
            let (Some(left), Some(right)) = (tokens.get(l as usize), tokens.get(r as usize)) else {
                return Err(BpeError::Corrupt(format!("merge {rank} refers to an unknown id")));
            };
            let merged = [left.as_slice(), right.as_slice()].concat();
            let id = tokens.len() as u32;
            if ranks.insert((l, r), (rank as u32, id)).is_some() {
                return Err(BpeError::Corrupt(format!("merge {rank} repeats ({l}, {r})")));
            }
            tokens.push(merged);
        }
        Ok(Self {
            target_vocab_size,
            merges,
            tokens,
            ranks,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn target_vocab_size(&self) -> usize {
        self.target_vocab_size
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    /// Lowest id whose byte string is `bytes`.
    pub fn token_id(&self, bytes: &[u8]) -> Option<u32> {
        self.tokens.iter().position(|t| t == bytes).map(|i| i as u32)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len() / 2);
        for piece in pretokenize(text) {
            self.encode_piece(piece.as_bytes(), &mut out);
        }
        out
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        let mut buf = Vec::new();
        pretokenize(text)
            .map(|piece| {
                buf.clear();
                self.encode_piece(piece.as_bytes(), &mut buf);
                buf.len()
            })
            .sum()
    }

    /// Applies merges lowest rank first, leftmost first among equal ranks,
    /// using a linked list and a heap so long pieces stay O(n log n).
    fn encode_piece(&self, bytes: &[u8], out: &mut Vec<u32>) {
        if bytes.len() < 2 || self.ranks.is_empty() {
            out.extend(bytes.iter().map(|&b| u32::from(b)));
            return;
        }
        const NONE: usize = usize::MAX;
        let n = bytes.len();
        let mut ids: Vec<u32> = bytes.iter().map(|&b| u32::from(b)).collect();
        let mut next: Vec<usize> = (1..=n).map(|i| if i == n { NONE } else { i }).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect();
        let mut alive = vec![true; n];
        let mut heap: BinaryHeap<Reverse<(u32, usize)>> = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(&(rank, _)) = self.ranks.get(&(ids[i], ids[i + 1])) {
                heap.push(Reverse((rank, i)));
            }
        }
        while let Some(Reverse((rank, pos))) = heap.pop() {
            let right = next[pos];
            if !alive[pos] || right == NONE {
                continue;
            }
            match self.ranks.get(&(ids[pos], ids[right])) {
                Some(&(r, merged)) if r == rank => {
                    ids[pos] = merged;
                    alive[right] = false;
                    next[pos] = next[right];
                    if next[pos] != NONE {
                        prev[next[pos]] = pos;
                    }
                    if prev[pos] != NONE {
                        if let Some(&(r, _)) = self.ranks.get(&(ids[prev[pos]], ids[pos])) {
                            heap.push(Reverse((r, prev[pos])));
                        }
                    }
                    if next[pos] != NONE {
                        if let Some(&(r, _)) = self.ranks.get(&(ids[pos], ids[next[pos]])) {
                            heap.push(Reverse((r, pos)));
                        }
                    }
                }
                _ => continue,
            }
        }
        let mut i = 0;
        while i != NONE {
            out.push(ids[i]);
            i = next[i];
        }
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>, BpeError> {
        let mut out = Vec::with_capacity(ids.len() * 2);
        for (position, &id) in ids.iter().enumerate() {
            let bytes = self.token_bytes(id).ok_or(BpeError::UnknownId { position, id })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        String::from_utf8(self.decode_bytes(ids)?).map_err(|_| BpeError::InvalidUtf8)
    }

    pub fn to_json(&self) -> Result<String, BpeError> {
        let file = ModelFile {
            target_vocab_size: self.target_vocab_size,
            merges: self.merges.clone(),
            vocab: self.tokens.iter().map(|t| B64.encode(t)).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a serialized model, checking the vocabulary against the merges.
    pub fn from_json(json: &str) -> Result<Self, BpeError> {
        let file: ModelFile = serde_json::from_str(json)?;
        let model = Self::from_merges(file.target_vocab_size, file.merges)?;
        if file.vocab.len() != model.tokens.len() {
            return Err(BpeError::Corrupt(format!(
                "vocab has {} entries, merges imply {}",
                file.vocab.len(),
                model.tokens.len()
            )));
        }
        for (id, (encoded, expected)) in file.vocab.iter().zip(&model.tokens).enumerate() {
            let bytes = B64
                .decode(encoded)
                .map_err(|e| BpeError::Corrupt(format!("vocab entry {id}: {e}")))?;
            if &bytes != expected {
                return Err(BpeError::Corrupt(format!("vocab entry {id} does not match its merge")));
            }
        }
        Ok(model)
    }
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: i64,
    merged: Vec<u8>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: highest count, then smallest merged bytes, then smallest pair
        self.count
            .cmp(&other.count)
            .then_with(|| other.merged.cmp(&self.merged))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn count_pieces<'a, I>(texts: I) -> Vec<(Vec<u8>, u64)>
where
    I: IntoParallelIterator<Item = &'a str>,
{
    let counts = texts
        .into_par_iter()
        .fold(HashMap::<&str, u64>::new, |mut acc, text| {
            for piece in pretokenize(text) {
                *acc.entry(piece).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    let mut pieces: Vec<(Vec<u8>, u64)> = counts.into_iter().map(|(k, v)| (k.as_bytes().to_vec(), v)).collect();
    pieces.sort_unstable();
    pieces
}

fn pairs_of(word: &[u32]) -> impl Iterator<Item = (u32, u32)> + '_ {
    word.windows(2).map(|w| (w[0], w[1]))
}

fn merge_word(word: &mut Vec<u32>, pair: (u32, u32), new_id: u32) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

/// Trains on the `text` of every document.
pub fn train_bpe(corpus: &[Document], target_vocab_size: usize) -> Result<BpeModel, BpeError> {
    train_bpe_texts(corpus.iter().map(|d| d.text.as_str()).collect(), target_vocab_size)
}

pub fn train_bpe_texts(texts: Vec<&str>, target_vocab_size: usize) -> Result<BpeModel, BpeError> {
    if target_vocab_size <= BYTE_ALPHABET {
        return Err(BpeError::TargetTooSmall(target_vocab_size));
    }
    if texts.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }
    let pieces = count_pieces(texts);
    let mut words: Vec<Vec<u32>> = pieces.iter().map(|(b, _)| b.iter().map(|&x| u32::from(x)).collect()).collect();
    let freqs: Vec<i64> = pieces.iter().map(|&(_, c)| c as i64).collect();

    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut occurs_in: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (w, word) in words.iter().enumerate() {
        for pair in pairs_of(word) {
            *pair_counts.entry(pair).or_default() += freqs[w];
            occurs_in.entry(pair).or_default().insert(w);
        }
    }
    let candidate = |tokens: &[Vec<u8>], pair: (u32, u32), count: i64| Candidate {
        count,
        merged: [tokens[pair.0 as usize].as_slice(), tokens[pair.1 as usize].as_slice()].concat(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| candidate(&tokens, pair, count))
        .collect();

    let mut merges = Vec::new();
    while tokens.len() < target_vocab_size {
        let Some(top) = heap.pop() else { break };
        let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(Candidate { count: current, ..top });
            }
            continue;
        }
        if current < 2 {
            break;
        }
        let pair = top.pair;
        let new_id = tokens.len() as u32;
        tokens.push(top.merged);
        merges.push(pair);

        let mut touched: HashMap<(u32, u32), i64> = HashMap::new();
        let mut affected: Vec<usize> = occurs_in.get(&pair).map(|s| s.iter().copied().collect()).unwrap_or_default();
        affected.sort_unstable();
        for w in affected {
            if !pairs_of(&words[w]).any(|p| p == pair) {
                continue;
            }
            for p in pairs_of(&words[w]) {
                *touched.entry(p).or_default() -= freqs[w];
            }
            merge_word(&mut words[w], pair, new_id);
            for p in pairs_of(&words[w]) {
                *touched.entry(p).or_default() += freqs[w];
                occurs_in.entry(p).or_default().insert(w);
            }
        }
        for (p, delta) in touched {
            if delta == 0 {
                continue;
            }
            let count = pair_counts.entry(p).or_default();
            *count += delta;
            if delta > 0 {
                heap.push(candidate(&tokens, p, *count));
            }
        }
    }
    BpeModel::from_merges(target_vocab_size, merges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(corpus: &[&str], target: usize) -> BpeModel {
        train_bpe_texts(corpus.to_vec(), target).unwrap()
    }

    fn piece_strings(m: &BpeModel, text: &str) -> Vec<String> {
        m.encode(text)
            .iter()
            .map(|&id| String::from_utf8(m.token_bytes(id).unwrap().to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn aaab_learns_aa() {
        // adjacent pairs of "aaab": (a,a) twice, (a,b) once
        let m = model(&["aaab"], 257);
        assert_eq!(m.merges(), &[(97, 97)]);
        assert_eq!(m.vocab_size(), 257);
        assert_eq!(piece_strings(&m, "aaab"), vec!["aa", "a", "b"]);
    }

    #[test]
    fn abab_learns_ab_first() {
        // pair counts {ab: 2, ba: 1}
        let m = model(&["abab"], 258);
        assert_eq!(m.merges()[0], (97, 98));
        // after the merge only (ab, ab) remains, once: training stops
        assert_eq!(m.vocab_size(), 257);
    }

    #[test]
    fn distinct_bytes_give_bare_alphabet() {
        let m = model(&["abcdefg"], 300);
        assert!(m.merges().is_empty());
        assert_eq!(m.vocab_size(), 256);
    }

    #[test]
    fn ties_break_on_merged_bytes() {
        // (c,d) and (a,b) both occur twice; "ab" sorts first
        let m = model(&["cdab cdab"], 257);
        assert_eq!(m.merges(), &[(97, 98)]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(train_bpe_texts(vec![], 300), Err(BpeError::EmptyCorpus)));
        assert!(matches!(train_bpe_texts(vec!["abc"], 256), Err(BpeError::TargetTooSmall(256))));
    }

    #[test]
    fn encode_empty_and_decode_empty() {
        let m = BpeModel::byte_level();
        assert!(m.encode("").is_empty());
        assert_eq!(m.decode(&[]).unwrap(), "");
    }

    #[test]
    fn unknown_id_reports_position() {
        let m = BpeModel::byte_level();
        match m.decode(&[104, 105, 4000]) {
            Err(BpeError::UnknownId { position, id }) => assert_eq!((position, id), (2, 4000)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partial_utf8_is_rejected() {
        let m = BpeModel::byte_level();
        assert!(matches!(m.decode(&[0xE4]), Err(BpeError::InvalidUtf8)));
    }

    #[test]
    fn pretokenizer_tiles_text() {
        let text = "Hello,  world! 中文分词测试abc 123456\t\n emoji😀 done  ";
        assert_eq!(pretokenize(text).collect::<String>(), text);
        let pieces: Vec<_> = pretokenize("中文分词测试").collect();
        assert_eq!(pieces, vec!["中文分词", "测试"]);
    }

    #[test]
    fn serialization_roundtrip_and_validation() {
        let m = model(&["the cat sat on the mat with the hat"], 280);
        let json = m.to_json().unwrap();
        let back = BpeModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);
        let tampered = json.replacen("\"merges\":[[", "\"merges\":[[1,1],[", 1);
        assert!(BpeModel::from_json(&tampered).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = ["low lower lowest", "new newer newest", "wide wider widest", "中文中文中文"];
        let a = model(&corpus, 300).to_json().unwrap();
        let b = model(&corpus, 300).to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_pieces_encode_consistently() {
        let text = "ab".repeat(5000);
        let m = model(&[&text], 270);
        let ids = m.encode(&text);
        assert_eq!(m.decode(&ids).unwrap(), text);
        assert!(ids.len() < text.len() / 4);
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary_text(text in "\\PC{0,80}") {
            let m = model(&["the quick brown fox 中文中文 😀😀 jumps over the lazy dog"], 320);
            let ids = m.encode(&text);
            prop_assert!(ids.len() <= text.len());
            prop_assert_eq!(m.decode(&ids).unwrap(), text);
        }

        #[test]
        fn larger_vocab_never_increases_token_count(text in "[a-e ]{0,60}") {
            let corpus = ["abc abd abe cde cab bad dab ace bead decade", "aaa bbb abab baba cdcd"];
            let mut last = usize::MAX;
            for target in [257, 260, 265, 275, 300] {
                let n = model(&corpus, target).count_tokens(&text);
                prop_assert!(n <= last);
                last = n;
            }
        }
    }
}

//! Elo ratings from per-sample model rankings.
//!
//! Each ranking of n models becomes n(n-1)/2 win/loss games, applied in
//! (winner rank, loser rank) order. Records are applied in input order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_K: f64 = 32.0;
pub const DEFAULT_INITIAL: f64 = 1500.0;

#[derive(Debug, Error, PartialEq)]
pub enum EloError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("model {0:?} cannot play itself")]
    SelfPlay(String),
    #[error("model {0:?} appears more than once in a ranking")]
    DuplicateModel(String),
    #[error("ranking needs at least 2 models, got {0}")]
    TooShort(usize),
    #[error("roster is empty")]
    EmptyRoster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub sample_id: String,
    pub ranking: Vec<String>,
}

impl crate::jsonl::Record for RankingRecord {
    fn check(&self) -> Result<(), String> {
        if self.ranking.len() < 2 {
            return Err(format!("ranking for {} has fewer than two models", self.sample_id));
        }
        Ok(())
    }
}

/// `1 / (1 + 10^((b - a) / 400))`. The lower-rated side is computed as the
/// complement, so `expected_score(a, b) + expected_score(b, a) == 1.0`.
pub fn expected_score(a: f64, b: f64) -> f64 {
    if a >= b {
        1.0 / (1.0 + 10f64.powf((b - a) / 400.0))
    } else {
        1.0 - expected_score(b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloTable {
    pub ratings: BTreeMap<String, f64>,
    pub games: BTreeMap<String, u64>,
    pub k_factor: f64,
    pub initial_rating: f64,
}

impl EloTable {
    pub fn new<S: AsRef<str>>(roster: &[S], k_factor: f64, initial_rating: f64) -> Result<Self, EloError> {
        if roster.is_empty() {
            return Err(EloError::EmptyRoster);
        }
        let mut ratings = BTreeMap::new();
        for name in roster {
            let name = name.as_ref().to_string();
            if ratings.insert(name.clone(), initial_rating).is_some() {
                return Err(EloError::DuplicateModel(name));
            }
        }
        let games = ratings.keys().map(|k| (k.clone(), 0)).collect();
        Ok(EloTable {
            ratings,
            games,
            k_factor,
            initial_rating,
        })
    }

    pub fn rating(&self, model: &str) -> Option<f64> {
        self.ratings.get(model).copied()
    }

    /// Applies one game and returns the points transferred to the winner.
    pub fn update(&mut self, winner: &str, loser: &str) -> Result<f64, EloError> {
        if winner == loser {
            return Err(EloError::SelfPlay(winner.to_string()));
        }
        let rw = self.rating(winner).ok_or_else(|| EloError::UnknownModel(winner.to_string()))?;
        let rl = self.rating(loser).ok_or_else(|| EloError::UnknownModel(loser.to_string()))?;
        let delta = self.k_factor * (1.0 - expected_score(rw, rl));
        self.ratings.insert(winner.to_string(), rw + delta);
        self.ratings.insert(loser.to_string(), rl - delta);
        *self.games.get_mut(winner).expect("present") += 1;
        *self.games.get_mut(loser).expect("present") += 1;
        Ok(delta)
    }

    /// Ratings descending, ties alphabetical.
    pub fn leaderboard(&self) -> Vec<LeaderboardEntry> {
        let mut out: Vec<LeaderboardEntry> = self
            .ratings
            .iter()
            .map(|(m, r)| LeaderboardEntry {
                model: m.clone(),
                rating: *r,
                games: self.games[m],
            })
            .collect();
        out.sort_by(|a, b| b.rating.total_cmp(&a.rating).then_with(|| a.model.cmp(&b.model)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub model: String,
    pub rating: f64,
    pub games: u64,
}

/// All (winner, loser) games implied by a best-first ranking.
pub fn expand_pairs(ranking: &[String]) -> Result<Vec<(&str, &str)>, EloError> {
    if ranking.len() < 2 {
        return Err(EloError::TooShort(ranking.len()));
    }
    let mut seen = BTreeSet::new();
    for m in ranking {
        if !seen.insert(m) {
            return Err(EloError::DuplicateModel(m.clone()));
        }
    }
    let mut games = Vec::with_capacity(ranking.len() * (ranking.len() - 1) / 2);
    for (i, w) in ranking.iter().enumerate() {
        for l in &ranking[i + 1..] {
            games.push((w.as_str(), l.as_str()));
        }
    }
    Ok(games)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Rating after each game a model played, starting from the initial rating.
    pub trajectories: BTreeMap<String, Vec<f64>>,
    pub records: usize,
}

pub fn run_tournament<I>(records: I, mut table: EloTable) -> Result<(EloTable, TournamentReport), EloError>
where
    I: IntoIterator<Item = RankingRecord>,
{
    let mut trajectories: BTreeMap<String, Vec<f64>> =
        table.ratings.iter().map(|(m, r)| (m.clone(), vec![*r])).collect();
    let mut count = 0;
    for record in records {
        count += 1;
        if let Some(unknown) = record.ranking.iter().find(|m| !table.ratings.contains_key(*m)) {
            return Err(EloError::UnknownModel(unknown.clone()));
        }
        for (w, l) in expand_pairs(&record.ranking)? {
            table.update(w, l)?;
            for m in [w, l] {
                trajectories.get_mut(m).expect("present").push(table.ratings[m]);
            }
        }
    }
    let report = TournamentReport {
        leaderboard: table.leaderboard(),
        trajectories,
        records: count,
    };
    Ok((table, report))
}

/// One model name per line; blank lines and `#` comments are skipped.
pub fn parse_roster(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

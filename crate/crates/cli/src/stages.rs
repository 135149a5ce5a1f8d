//! The clean, dedup and mix stages. Shared by their subcommands and by
//! `pipeline`, so a one-stage pipeline writes exactly what the standalone
//! subcommand writes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use corpusforge::cleaner::{CleanOutcome, CleanReport, Cleaner, Reject};
use corpusforge::dedup::{simhash, DedupConfig, Deduplicator, Verdict};
use corpusforge::jsonl::JsonlWriter;
use corpusforge::mixer::{layout, materialize, sample_mixture, MixError, MixtureSpec};
use corpusforge::{BpeModel, Document};
use rayon::prelude::*;
use serde::Serialize;

use crate::run::{next_chunk, open_records, read_all, usage, write_json, Skipped};

fn create(path: &Path) -> Result<JsonlWriter<std::fs::File>> {
    JsonlWriter::create(path).with_context(|| format!("creating {}", path.display()))
}

pub struct CleanPaths {
    pub input: PathBuf,
    pub out: PathBuf,
    pub rejects: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

pub fn run_clean(cleaner: &Cleaner, paths: &CleanPaths, skipped: &mut Skipped) -> Result<CleanReport> {
    let mut records = open_records::<Document>(&paths.input)?;
    let mut kept = create(&paths.out)?;
    let mut rejects = paths.rejects.as_deref().map(create).transpose()?;
    let mut report = CleanReport::default();
    loop {
        let chunk = next_chunk(&mut records, &paths.input, skipped);
        if chunk.is_empty() {
            break;
        }
        let outcomes: Vec<CleanOutcome> = chunk.into_par_iter().map(|d| cleaner.process(d)).collect();
        for outcome in outcomes {
            report.record(&outcome);
            match outcome {
                CleanOutcome::Kept { doc, .. } => kept.write(&doc)?,
                CleanOutcome::Dropped { original, reason, .. } => {
                    if let Some(w) = rejects.as_mut() {
                        w.write(&Reject { doc: original, reason })?;
                    }
                }
            }
        }
    }
    kept.finish()?;
    if let Some(w) = rejects {
        w.finish()?;
    }
    if let Some(p) = &paths.report {
        write_json(p, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DedupSummary {
    pub input: u64,
    pub kept: u64,
    pub duplicates: u64,
}

/// Fingerprints each chunk in parallel, then runs the greedy pass in input
/// order. Documents that cannot be fingerprinted count as malformed.
pub fn run_dedup(cfg: DedupConfig, input: &Path, out: &Path, report: Option<&Path>, skipped: &mut Skipped) -> Result<DedupSummary> {
    let mut dedup = Deduplicator::new(cfg).map_err(usage)?;
    let mut records = open_records::<Document>(input)?;
    let mut kept = create(out)?;
    let mut dupes = report.map(create).transpose()?;
    let mut summary = DedupSummary::default();
    loop {
        let chunk = next_chunk(&mut records, input, skipped);
        if chunk.is_empty() {
            break;
        }
        let bits: Vec<_> = chunk.par_iter().map(|d| simhash(&d.text, cfg.shingle_len)).collect();
        for (doc, bits) in chunk.into_iter().zip(bits) {
            let bits = match bits {
                Ok(b) => b,
                Err(e) => {
                    skipped.note(input, &format!("id {}: {e}", doc.id));
                    continue;
                }
            };
            summary.input += 1;
            match dedup.offer_fingerprint(&doc, bits) {
                Verdict::Keep => {
                    summary.kept += 1;
                    kept.write(&doc)?;
                }
                Verdict::Duplicate(pair) => {
                    summary.duplicates += 1;
                    if let Some(w) = dupes.as_mut() {
                        w.write(&pair)?;
                    }
                }
            }
        }
    }
    kept.finish()?;
    if let Some(w) = dupes {
        w.finish()?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct MixSummary {
    pub input: u64,
    pub entries: u64,
    pub unit: corpusforge::mixer::Unit,
    pub quotas: std::collections::BTreeMap<String, u64>,
    pub achieved: std::collections::BTreeMap<String, u64>,
    pub proportions: std::collections::BTreeMap<String, f64>,
    pub layout: corpusforge::mixer::LayoutKind,
    pub seed: u64,
}

/// Loads the whole input (sampling needs every category's size up front).
pub fn run_mix(
    spec: &MixtureSpec,
    input: &Path,
    tokenizer: &BpeModel,
    manifest: &Path,
    out: Option<&Path>,
    skipped: &mut Skipped,
) -> Result<MixSummary> {
    spec.validate().map_err(usage)?;
    let docs: Vec<Document> = read_all(input, skipped)?;
    let pool = sample_mixture(&docs, spec, tokenizer).map_err(mix_error)?;
    let m = layout(&pool, spec).map_err(mix_error)?;
    let mut w = create(manifest)?;
    for e in &m.entries {
        w.write(e)?;
    }
    w.finish()?;
    if let Some(out) = out {
        let mut w = create(out)?;
        for d in materialize(&docs, &m) {
            w.write(&d)?;
        }
        w.finish()?;
    }
    Ok(MixSummary {
        input: docs.len() as u64,
        entries: m.entries.len() as u64,
        unit: pool.unit,
        quotas: pool.quotas.clone(),
        achieved: pool.achieved.clone(),
        proportions: m.proportions,
        layout: m.layout,
        seed: m.seed,
    })
}

fn mix_error(e: MixError) -> anyhow::Error {
    match e {
        MixError::MissingCategory(_) | MixError::ZeroTokens(_) => anyhow::Error::new(e),
        _ => usage(e),
    }
}

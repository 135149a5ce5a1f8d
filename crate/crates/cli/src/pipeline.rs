//! `pipeline`: clean, dedup and mix chained through files in one output
//! directory. Each stage writes what its standalone subcommand would write,
//! plus a `<stage>.run.json` manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use corpusforge::bpe::train_bpe;
use corpusforge::cleaner::Cleaner;
use corpusforge::dedup::DedupConfig;
use corpusforge::mixer::{GroupBy, LayoutKind, MixtureSpec, Unit};
use corpusforge::seed::derive_seed;
use corpusforge::{BpeModel, Document, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::args::{PipelineArgs, StageName};
use crate::commands::{ensure_exists, load_tokenizer};
use crate::run::{read_all, read_config, usage, Run, Skipped};
use crate::stages::{run_clean, run_dedup, run_mix, CleanPaths};

pub const DEFAULT_BPE_VOCAB: usize = 512;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupSection {
    pub by_source: bool,
}

/// Mixture settings. Empty `weights` falls back to `mixture_weights`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixSection {
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    pub total_budget: u64,
    pub unit: Unit,
    pub layout: LayoutKind,
    #[serde(default)]
    pub block_order: Option<Vec<String>>,
    #[serde(default)]
    pub group_by: GroupBy,
    #[serde(default)]
    pub sub_block_by: Option<String>,
}

fn default_stages() -> Vec<StageName> {
    vec![StageName::Clean, StageName::Dedup, StageName::Mix]
}

fn default_bpe_vocab() -> usize {
    DEFAULT_BPE_VOCAB
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineFile {
    #[serde(flatten)]
    pub settings: PipelineConfig,
    #[serde(default = "default_stages")]
    pub stages: Vec<StageName>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dedup: DedupSection,
    #[serde(default)]
    pub mix: Option<MixSection>,
    /// Tokenizer for token budgets. When unset one is trained on the mix
    /// stage's input and saved as `bpe.json`.
    #[serde(default)]
    pub bpe_model: Option<PathBuf>,
    #[serde(default = "default_bpe_vocab")]
    pub bpe_vocab_size: usize,
}

impl PipelineFile {
    fn apply(&mut self, args: &PipelineArgs) {
        if let Some(p) = &args.input {
            self.input = Some(p.clone());
        }
        if let Some(p) = &args.output_dir {
            self.output_dir = Some(p.clone());
        }
        if let Some(s) = args.seed {
            self.settings.seed = s;
        }
        if let Some(s) = &args.stages {
            self.stages = s.clone();
        }
        if let Some(v) = args.density_threshold {
            self.settings.density_threshold = v;
        }
        if let Some(v) = args.min_cjk_chars {
            self.settings.min_cjk_chars = v;
        }
        if let Some(v) = args.dedup_threshold {
            self.settings.simhash_hamming_threshold = v;
        }
        if args.by_source {
            self.dedup.by_source = true;
        }
    }

    fn check_stages(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(usage("pipeline needs at least one stage"));
        }
        let mut rank = Vec::new();
        for s in &self.stages {
            let r = *s as usize;
            if rank.contains(&r) {
                return Err(usage(format!("stage {} listed twice", s.as_str())));
            }
            rank.push(r);
        }
        if rank.windows(2).any(|w| w[0] > w[1]) {
            let names: Vec<_> = self.stages.iter().map(|s| s.as_str()).collect();
            eprintln!("warning: nonstandard stage order [{}]; the usual order is clean, dedup, mix", names.join(", "));
        }
        Ok(())
    }
}

pub fn run(args: &PipelineArgs) -> Result<()> {
    let mut cfg: PipelineFile = read_config(&args.config)?;
    cfg.apply(args);
    cfg.check_stages()?;
    cfg.settings.validate().map_err(usage)?;
    let input = cfg.input.clone().ok_or_else(|| usage("no input: set `input` or pass --in"))?;
    let dir = cfg.output_dir.clone().ok_or_else(|| usage("no output directory: set `output_dir` or pass --output-dir"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut current = input;
    let mut skipped = Skipped::default();
    for stage in cfg.stages.clone() {
        ensure_exists(&current, &format!("stage {}", stage.as_str()))?;
        current = match stage {
            StageName::Clean => clean_stage(&cfg, &current, &dir, &mut skipped),
            StageName::Dedup => dedup_stage(&cfg, &current, &dir, &mut skipped),
            StageName::Mix => mix_stage(&cfg, &current, &dir, &mut skipped),
        }
        .with_context(|| format!("stage {} failed", stage.as_str()))?;
    }
    skipped.into_result()
}

fn clean_stage(cfg: &PipelineFile, input: &Path, dir: &Path, skipped: &mut Skipped) -> Result<PathBuf> {
    let cleaner = Cleaner::new(cfg.settings.clone()).map_err(usage)?;
    let mut run = Run::start("clean", &cfg.settings)?;
    let paths = CleanPaths {
        input: input.to_path_buf(),
        out: dir.join("clean.jsonl"),
        rejects: Some(dir.join("clean.rejects.jsonl")),
        report: Some(dir.join("clean.report.json")),
    };
    let before = skipped.count;
    let report = run_clean(&cleaner, &paths, skipped)?;
    run.input(&paths.input).output(&paths.out);
    for p in [&paths.rejects, &paths.report].into_iter().flatten() {
        run.output(p);
    }
    run.seed(derive_seed(cfg.settings.seed, "clean"));
    run.counts(&serde_json::json!({
        "input": report.input_count,
        "kept": report.kept_count,
        "dropped": report.dropped_count(),
        "skipped": skipped.count - before,
    }))?;
    run.finish(Some(&dir.join("clean.run.json")))?;
    Ok(paths.out)
}

fn dedup_stage(cfg: &PipelineFile, input: &Path, dir: &Path, skipped: &mut Skipped) -> Result<PathBuf> {
    let dc = DedupConfig {
        threshold: cfg.settings.simhash_hamming_threshold,
        shingle_len: cfg.settings.shingle_len,
        by_source: cfg.dedup.by_source,
    };
    let mut run = Run::start("dedup", &dc)?;
    let out = dir.join("dedup.jsonl");
    let report = dir.join("dedup.dupes.jsonl");
    let before = skipped.count;
    let summary = run_dedup(dc, input, &out, Some(&report), skipped)?;
    run.input(input).output(&out).output(&report);
    run.seed(derive_seed(cfg.settings.seed, "dedup"));
    run.counts(&serde_json::json!({
        "input": summary.input,
        "kept": summary.kept,
        "duplicates": summary.duplicates,
        "skipped": skipped.count - before,
    }))?;
    run.finish(Some(&dir.join("dedup.run.json")))?;
    Ok(out)
}

fn mix_stage(cfg: &PipelineFile, input: &Path, dir: &Path, skipped: &mut Skipped) -> Result<PathBuf> {
    let section = cfg.mix.as_ref().ok_or_else(|| usage("stage mix needs a `mix` section"))?;
    let spec = MixtureSpec {
        weights: if section.weights.is_empty() {
            cfg.settings.mixture_weights.clone()
        } else {
            section.weights.clone()
        },
        total_budget: section.total_budget,
        unit: section.unit,
        layout: section.layout,
        block_order: section.block_order.clone(),
        group_by: section.group_by,
        sub_block_by: section.sub_block_by.clone(),
        seed: derive_seed(cfg.settings.seed, "mix"),
    };
    spec.validate().map_err(usage)?;
    let mut run = Run::start("mix", &spec)?;
    let tokenizer = match &cfg.bpe_model {
        Some(p) => {
            run.input(p);
            load_tokenizer(p)?
        }
        None => {
            let path = dir.join("bpe.json");
            let model = train_tokenizer(input, cfg.bpe_vocab_size)?;
            let mut json = model.to_json()?;
            json.push('\n');
            fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            run.output(&path);
            model
        }
    };
    let manifest = dir.join("mix.manifest.jsonl");
    let out = dir.join("mix.jsonl");
    let summary = run_mix(&spec, input, &tokenizer, &manifest, Some(&out), skipped)?;
    run.input(input).output(&manifest).output(&out);
    run.seed(spec.seed).counts(&summary)?;
    run.finish(Some(&dir.join("mix.run.json")))?;
    Ok(out)
}

fn train_tokenizer(input: &Path, vocab: usize) -> Result<BpeModel> {
    // malformed lines are reported once, by the mix stage itself
    let mut quiet = Skipped { silent: true, ..Skipped::default() };
    let docs: Vec<Document> = read_all(input, &mut quiet)?;
    train_bpe(&docs, vocab).map_err(|e| match e {
        corpusforge::bpe::BpeError::TargetTooSmall(_) => usage(e),
        other => anyhow::Error::new(other),
    })
}

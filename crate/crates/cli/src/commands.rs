use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use corpusforge::bpe::train_bpe;
use corpusforge::cleaner::Cleaner;
use corpusforge::dedup::DedupConfig;
use corpusforge::document::compute_stats;
use corpusforge::elo::{parse_roster, run_tournament, EloTable, RankingRecord};
use corpusforge::jsonl::JsonlWriter;
use corpusforge::mixer::MixtureSpec;
use corpusforge::oracle::{perplexity_matrix, train_ngram, MatrixConfig, NgramModel};
use corpusforge::scaling::{fit_scaling_law, predict_loss, FlopsEstimator, ScalingFit, ScalingPoint};
use corpusforge::selector::{filter_and_sample, kmeans_cluster, select_by_entropy_band, selected_ids, EntropyScore, SelectionPolicy};
use corpusforge::testkit::{gen_corpus, FixtureSpec};
use corpusforge::{BpeModel, CorpusStats, Document, PipelineConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::run::{manifest_path, next_chunk, open_records, read_all, read_config, read_json, usage, write_json, Run, Skipped, CHUNK};
use crate::stages::{run_clean, run_dedup, run_mix, CleanPaths};

pub fn load_tokenizer(path: &Path) -> Result<BpeModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    BpeModel::from_json(&text).with_context(|| format!("loading tokenizer {}", path.display()))
}

fn optional_tokenizer(path: Option<&Path>) -> Result<BpeModel> {
    path.map(load_tokenizer).transpose().map(|t| t.unwrap_or_else(BpeModel::byte_level))
}

/// JSONL sink that is either a file or stdout.
fn sink(path: Option<&Path>) -> Result<JsonlWriter<Box<dyn Write>>> {
    let inner: Box<dyn Write> = match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(JsonlWriter::new(inner))
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let mut run = Run::start("stats", args)?;
    run.input(&args.input);
    let tokenizer = args.model.as_deref().map(load_tokenizer).transpose()?;
    let mut records = open_records::<Document>(&args.input)?;
    let mut skipped = Skipped::default();
    let mut stats = CorpusStats::empty(tokenizer.is_some());
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        for item in records.by_ref() {
            match item {
                Ok(doc) => chunk.push(doc),
                Err(e) => {
                    skipped.report(&args.input, &e);
                    stats.skip(&e);
                }
            }
            if chunk.len() == CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let part = chunk
            .par_chunks(256)
            .map(|c| compute_stats(c.iter().cloned().map(Ok), tokenizer.as_ref()))
            .reduce(|| CorpusStats::empty(tokenizer.is_some()), CorpusStats::merge);
        stats = stats.merge(part);
    }
    match &args.out {
        Some(p) => {
            write_json(p, &stats)?;
            run.output(p);
        }
        None => println!("{}", serde_json::to_string_pretty(&stats)?),
    }
    run.counts(&serde_json::json!({ "docs": stats.total_docs, "bytes": stats.total_bytes, "skipped": skipped.count }))?;
    run.finish(args.out.as_deref().map(manifest_path).as_deref())?;
    skipped.into_result()
}

pub fn clean(args: &CleanArgs) -> Result<()> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.density_threshold {
        cfg.density_threshold = v;
    }
    if let Some(v) = args.min_cjk_chars {
        cfg.min_cjk_chars = v;
    }
    if let Some(v) = &args.sensitive_vocab {
        cfg.sensitive_vocab = Some(v.clone());
    }
    let cleaner = Cleaner::new(cfg.clone()).map_err(usage)?;
    let mut run = Run::start("clean", &cfg)?;
    let paths = CleanPaths {
        input: args.input.clone(),
        out: args.out.clone(),
        rejects: args.rejects.clone(),
        report: args.report.clone(),
    };
    let mut skipped = Skipped::default();
    let report = run_clean(&cleaner, &paths, &mut skipped)?;
    run.input(&paths.input).output(&paths.out);
    for p in [&paths.rejects, &paths.report].into_iter().flatten() {
        run.output(p);
    }
    run.counts(&serde_json::json!({
        "input": report.input_count,
        "kept": report.kept_count,
        "dropped": report.dropped_count(),
        "skipped": skipped.count,
    }))?;
    run.finish(Some(&manifest_path(&paths.out)))?;
    skipped.into_result()
}

pub fn dedup(args: &DedupArgs) -> Result<()> {
    let cfg = DedupConfig {
        threshold: args.threshold,
        shingle_len: args.shingle_len,
        by_source: args.by_source,
    };
    let mut run = Run::start("dedup", &cfg)?;
    let mut skipped = Skipped::default();
    let summary = run_dedup(cfg, &args.input, &args.out, args.report.as_deref(), &mut skipped)?;
    run.input(&args.input).output(&args.out);
    if let Some(p) = &args.report {
        run.output(p);
    }
    run.counts(&serde_json::json!({
        "input": summary.input,
        "kept": summary.kept,
        "duplicates": summary.duplicates,
        "skipped": skipped.count,
    }))?;
    run.finish(Some(&manifest_path(&args.out)))?;
    skipped.into_result()
}

pub fn bpe(cmd: &BpeCommand) -> Result<()> {
    match cmd {
        BpeCommand::Train(args) => {
            let mut run = Run::start("bpe train", args)?;
            let mut skipped = Skipped::default();
            let docs: Vec<Document> = read_all(&args.input, &mut skipped)?;
            let model = train_bpe(&docs, args.vocab).map_err(|e| match e {
                corpusforge::bpe::BpeError::TargetTooSmall(_) => usage(e),
                other => anyhow::Error::new(other),
            })?;
            let mut json = model.to_json()?;
            json.push('\n');
            fs::write(&args.out, json).with_context(|| format!("writing {}", args.out.display()))?;
            run.input(&args.input).output(&args.out);
            run.counts(&serde_json::json!({
                "docs": docs.len(),
                "vocab_size": model.vocab_size(),
                "merges": model.merges().len(),
                "skipped": skipped.count,
            }))?;
            run.finish(Some(&manifest_path(&args.out)))?;
            skipped.into_result()
        }
        BpeCommand::Encode(args) => {
            #[derive(Serialize)]
            struct Count<'a> {
                id: &'a str,
                tokens: usize,
            }
            #[derive(Serialize)]
            struct Encoded<'a> {
                id: &'a str,
                ids: Vec<u32>,
            }
            let mut run = Run::start("bpe encode", args)?;
            let model = load_tokenizer(&args.model)?;
            let mut records = open_records::<Document>(&args.input)?;
            let mut skipped = Skipped::default();
            let mut out = sink(args.out.as_deref())?;
            let (mut docs, mut tokens) = (0u64, 0u64);
            loop {
                let chunk = next_chunk(&mut records, &args.input, &mut skipped);
                if chunk.is_empty() {
                    break;
                }
                let encoded: Vec<Vec<u32>> = chunk.par_iter().map(|d| model.encode(&d.text)).collect();
                for (doc, ids) in chunk.iter().zip(encoded) {
                    docs += 1;
                    tokens += ids.len() as u64;
                    if args.count_only {
                        out.write(&Count { id: &doc.id, tokens: ids.len() })?;
                    } else {
                        out.write(&Encoded { id: &doc.id, ids })?;
                    }
                }
            }
            out.finish()?;
            run.input(&args.model).input(&args.input);
            if let Some(p) = &args.out {
                run.output(p);
            }
            run.counts(&serde_json::json!({ "docs": docs, "tokens": tokens, "skipped": skipped.count }))?;
            run.finish(args.out.as_deref().map(manifest_path).as_deref())?;
            skipped.into_result()
        }
    }
}

pub fn mix(args: &MixArgs) -> Result<()> {
    let mut spec: MixtureSpec = read_config(&args.config)?;
    if let Some(key) = &args.sub_block_by {
        spec.sub_block_by = Some(key.clone());
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let tokenizer = optional_tokenizer(args.model.as_deref())?;
    let mut run = Run::start("mix", &spec)?;
    let mut skipped = Skipped::default();
    let summary = run_mix(&spec, &args.input, &tokenizer, &args.manifest, args.out.as_deref(), &mut skipped)?;
    run.input(&args.input);
    if let Some(m) = &args.model {
        run.input(m);
    }
    run.output(&args.manifest);
    if let Some(p) = &args.out {
        run.output(p);
    }
    run.seed(spec.seed).counts(&summary)?;
    run.finish(Some(&manifest_path(&args.manifest)))?;
    skipped.into_result()
}

fn read_points(path: &Path) -> Result<Vec<ScalingPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut points = Vec::new();
    for (i, row) in reader.deserialize::<ScalingPoint>().enumerate() {
        points.push(row.with_context(|| format!("{}: row {}", path.display(), i + 2))?);
    }
    Ok(points)
}

pub fn scaling(cmd: &ScalingCommand) -> Result<()> {
    match cmd {
        ScalingCommand::Fit(args) => {
            #[derive(Serialize)]
            struct FitFile<'a> {
                #[serde(flatten)]
                fit: &'a ScalingFit,
                points: usize,
            }
            let mut run = Run::start("scaling fit", args)?;
            let points = read_points(&args.points)?;
            let fit = fit_scaling_law(&points)?;
            write_json(&args.out, &FitFile { fit: &fit, points: points.len() })?;
            run.input(&args.points).output(&args.out);
            run.counts(&serde_json::json!({ "points": points.len() }))?;
            run.finish(Some(&manifest_path(&args.out)))
        }
        ScalingCommand::Predict(args) => {
            let mut run = Run::start("scaling predict", args)?;
            let fit: ScalingFit = read_json(&args.fit)?;
            let flops = match (args.flops, args.params, args.tokens) {
                (Some(c), None, None) => c,
                (None, Some(n), Some(d)) => FlopsEstimator {
                    per_param_token: args.per_param_token,
                }
                .estimate(n, d)
                .map_err(usage)?,
                _ => return Err(usage("give either --flops or both --params and --tokens")),
            };
            let loss = predict_loss(&fit, flops).map_err(usage)?;
            let out = serde_json::json!({ "flops": flops, "loss": loss });
            match &args.out {
                Some(p) => {
                    write_json(p, &out)?;
                    run.output(p);
                }
                None => println!("{}", serde_json::to_string(&out)?),
            }
            run.input(&args.fit);
            run.counts(&out)?;
            run.finish(args.out.as_deref().map(manifest_path).as_deref())
        }
    }
}

pub fn oracle(cmd: &OracleCommand) -> Result<()> {
    match cmd {
        OracleCommand::Train(args) => {
            let mut run = Run::start("oracle train", args)?;
            let tokenizer = optional_tokenizer(args.tokenizer.as_deref())?;
            let mut skipped = Skipped::default();
            let docs: Vec<Document> = read_all(&args.input, &mut skipped)?;
            let model = train_ngram(&docs, args.order, args.alpha, &tokenizer).map_err(oracle_error)?;
            let mut json = model.to_json()?;
            json.push('\n');
            fs::write(&args.out, json).with_context(|| format!("writing {}", args.out.display()))?;
            run.input(&args.input).output(&args.out);
            run.counts(&serde_json::json!({ "docs": docs.len(), "skipped": skipped.count }))?;
            run.finish(Some(&manifest_path(&args.out)))?;
            skipped.into_result()
        }
        OracleCommand::Score(args) => {
            let mut run = Run::start("oracle score", args)?;
            let text = fs::read_to_string(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
            let model = NgramModel::from_json(&text).with_context(|| format!("loading {}", args.model.display()))?;
            let mut records = open_records::<Document>(&args.input)?;
            let mut skipped = Skipped::default();
            let mut out = sink(Some(&args.out))?;
            let mut scored = 0u64;
            loop {
                let chunk = next_chunk(&mut records, &args.input, &mut skipped);
                if chunk.is_empty() {
                    break;
                }
                let scores: Vec<_> = chunk.par_iter().map(|d| model.score(d, args.output_only)).collect();
                for (doc, score) in chunk.iter().zip(scores) {
                    match score {
                        Ok(s) => {
                            scored += 1;
                            out.write(&EntropyScore {
                                id: doc.id.clone(),
                                entropy: s.entropy,
                                tokens: Some(s.tokens),
                            })?;
                        }
                        Err(e) => skipped.note(&args.input, &e.to_string()),
                    }
                }
            }
            out.finish()?;
            run.input(&args.model).input(&args.input).output(&args.out);
            run.counts(&serde_json::json!({ "scored": scored, "skipped": skipped.count }))?;
            run.finish(Some(&manifest_path(&args.out)))?;
            skipped.into_result()
        }
        OracleCommand::Matrix(args) => {
            let mut run = Run::start("oracle matrix", args)?;
            let tokenizer = optional_tokenizer(args.tokenizer.as_deref())?;
            let mut skipped = Skipped::default();
            let mut sources = Vec::new();
            let mut labels = BTreeSet::new();
            for path in &args.sources {
                let label = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                if !labels.insert(label.clone()) {
                    return Err(usage(format!("two sources share the label {label:?}")));
                }
                sources.push((label, read_all::<Document>(path, &mut skipped)?));
                run.input(path);
            }
            let cfg = MatrixConfig {
                order: args.order,
                alpha: args.alpha,
                holdout: args.holdout,
                seed: args.seed,
            };
            let m = perplexity_matrix(&sources, &cfg, &tokenizer).map_err(oracle_error)?;
            let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            let mut header = vec!["train".to_string()];
            header.extend(m.sources.iter().cloned());
            w.write_record(&header)?;
            for (label, row) in m.sources.iter().zip(&m.cells) {
                let mut rec = vec![label.clone()];
                rec.extend(row.iter().map(|v| format!("{v:.6}")));
                w.write_record(&rec)?;
            }
            w.flush()?;
            run.output(&args.out).seed(args.seed);
            run.counts(&serde_json::json!({ "sources": m.sources, "cross_entropy": m.cross_entropy }))?;
            run.finish(Some(&manifest_path(&args.out)))?;
            skipped.into_result()
        }
    }
}

fn oracle_error(e: corpusforge::oracle::OracleError) -> anyhow::Error {
    use corpusforge::oracle::OracleError::*;
    match e {
        ZeroOrder | BadAlpha(_) | TooFewSources(_) => usage(e),
        other => anyhow::Error::new(other),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionFile {
    pub policy: SelectionPolicy,
    pub k: usize,
    pub seed: u64,
    pub clusters: Vec<ClusterSummary>,
    pub selection: corpusforge::selector::BandSelection,
    pub sampled_ids: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: String,
    pub centroid: f64,
    pub size: usize,
    pub kept: bool,
    pub mean_tokens: Option<f64>,
}

pub fn select(args: &SelectArgs) -> Result<()> {
    if let Some(SelectCommand::Extract(ex)) = &args.command {
        return select_extract(ex);
    }
    let (Some(scores_path), Some(pe), Some(out)) = (&args.scores, args.pretrain_entropy, &args.out) else {
        return Err(usage("select needs --scores, --pretrain-entropy and --out"));
    };
    let mut run = Run::start("select", args)?;
    let mut skipped = Skipped::default();
    let scores: Vec<EntropyScore> = read_all(scores_path, &mut skipped)?;
    let mode = args.mode.into();
    let mut policy = SelectionPolicy::new(mode, pe);
    if args.desk_scale {
        policy = policy.desk_scaled(scores.len());
    }
    if let Some(v) = args.min_cluster_size {
        policy.min_cluster_size = v;
    }
    if let Some(v) = args.sample_size {
        policy.sample_size = v;
    }
    policy.band = (args.band_low.unwrap_or(policy.band.0), args.band_high.unwrap_or(policy.band.1));
    policy.validate().map_err(usage)?;

    let clusters = kmeans_cluster(&scores, args.k, args.seed).map_err(|e| match e {
        corpusforge::selector::SelectError::TooFewScores { .. } | corpusforge::selector::SelectError::ZeroK => usage(e),
        other => anyhow::Error::new(other),
    })?;
    let (survivors, mut warnings) = filter_and_sample(&clusters, &policy, args.seed);
    let selection = select_by_entropy_band(&survivors, &policy);
    if selection.selected.is_empty() {
        warnings.push(format!(
            "no cluster centroid lies in [{:.4}, {:.4}]",
            selection.band.0, selection.band.1
        ));
    }
    let kept: BTreeSet<&str> = survivors.iter().map(|c| c.label.as_str()).collect();
    let file = SelectionFile {
        policy: policy.clone(),
        k: args.k,
        seed: args.seed,
        clusters: clusters
            .iter()
            .map(|c| ClusterSummary {
                label: c.label.clone(),
                centroid: c.centroid,
                size: c.size,
                kept: kept.contains(c.label.as_str()),
                mean_tokens: c.mean_tokens,
            })
            .collect(),
        sampled_ids: selected_ids(&survivors, &selection),
        selection,
        warnings,
    };
    for w in &file.warnings {
        eprintln!("warning: {w}");
    }
    write_json(out, &file)?;
    run.input(scores_path).output(out).seed(args.seed);
    run.counts(&serde_json::json!({
        "scores": scores.len(),
        "clusters": file.clusters.len(),
        "kept_clusters": kept.len(),
        "selected": file.selection.selected,
        "sampled_ids": file.sampled_ids.len(),
        "skipped": skipped.count,
    }))?;
    run.finish(Some(&manifest_path(out)))?;
    skipped.into_result()
}

fn select_extract(args: &ExtractArgs) -> Result<()> {
    let mut run = Run::start("select extract", args)?;
    let selection: SelectionFile = read_json(&args.selection)?;
    let wanted: BTreeSet<&str> = selection.sampled_ids.iter().map(String::as_str).collect();
    let mut records = open_records::<Document>(&args.input)?;
    let mut skipped = Skipped::default();
    let mut out = sink(Some(&args.out))?;
    loop {
        let chunk = next_chunk(&mut records, &args.input, &mut skipped);
        if chunk.is_empty() {
            break;
        }
        for doc in chunk.iter().filter(|d| wanted.contains(d.id.as_str())) {
            out.write(doc)?;
        }
    }
    let written = out.written();
    out.finish()?;
    run.input(&args.selection).input(&args.input).output(&args.out);
    run.counts(&serde_json::json!({ "wanted": wanted.len(), "written": written, "skipped": skipped.count }))?;
    run.finish(Some(&manifest_path(&args.out)))?;
    skipped.into_result()
}

pub fn elo(cmd: &EloCommand) -> Result<()> {
    let EloCommand::Run(args) = cmd;
    let mut run = Run::start("elo run", args)?;
    let roster_text = fs::read_to_string(&args.roster).map_err(|e| usage(format!("roster {}: {e}", args.roster.display())))?;
    let table = EloTable::new(&parse_roster(&roster_text), args.k, args.initial).map_err(usage)?;
    let mut skipped = Skipped::default();
    let records: Vec<RankingRecord> = read_all(&args.rankings, &mut skipped)?;
    // a bad record would change every later rating, so nothing is written
    skipped.into_result()?;
    let (_, report) = run_tournament(records, table)?;
    write_json(&args.out, &report.leaderboard)?;
    run.input(&args.rankings).input(&args.roster).output(&args.out);
    if let Some(p) = &args.trajectories {
        write_json(p, &report.trajectories)?;
        run.output(p);
    }
    run.counts(&serde_json::json!({ "records": report.records, "models": report.leaderboard.len() }))?;
    run.finish(Some(&manifest_path(&args.out)))
}

pub fn testkit(cmd: &TestkitCommand) -> Result<()> {
    let TestkitCommand::Gen(args) = cmd;
    let spec: FixtureSpec = read_config(&args.spec)?;
    let mut run = Run::start("testkit gen", &spec)?;
    let fixture = gen_corpus(&spec);
    let mut docs = sink(Some(&args.out))?;
    for d in &fixture.docs {
        docs.write(d)?;
    }
    docs.finish()?;
    let mut labels = sink(Some(&args.labels))?;
    for l in &fixture.labels {
        labels.write(l)?;
    }
    labels.finish()?;
    run.input(&args.spec).output(&args.out).output(&args.labels).seed(spec.seed);
    run.counts(&serde_json::json!({
        "docs": fixture.docs.len(),
        "duplicates": fixture.labels.iter().filter(|l| l.duplicate_of.is_some()).count(),
        "pii": fixture.labels.iter().filter(|l| l.contains_pii).count(),
        "spam": fixture.labels.iter().filter(|l| l.is_spam).count(),
    }))?;
    run.finish(Some(&manifest_path(&args.out)))
}

pub fn ensure_exists(path: &PathBuf, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what}: input {} not found", path.display());
    }
    Ok(())
}

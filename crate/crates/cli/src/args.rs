use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corpusforge::selector::Mode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "corpusforge", version, about = "Bilingual pre-training corpus toolkit")]
pub struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "CORPUSFORGE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-category document, byte and token counts.
    Stats(StatsArgs),
    /// Format, quality, sensitive-content and self-repeat filtering.
    Clean(CleanArgs),
    /// SimHash near-duplicate removal.
    Dedup(DedupArgs),
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Sample a weighted mixture and lay it out.
    Mix(MixArgs),
    #[command(subcommand)]
    Scaling(ScalingCommand),
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Cluster entropy scores and pick clusters in an entropy band.
    Select(SelectArgs),
    #[command(subcommand)]
    Elo(EloCommand),
    /// Run clean, dedup and mix from one config file.
    Pipeline(PipelineArgs),
    #[command(subcommand)]
    Testkit(TestkitCommand),
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Tokenizer for token counts.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CleanArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub density_threshold: Option<f64>,
    #[arg(long)]
    pub min_cjk_chars: Option<usize>,
    #[arg(long)]
    pub sensitive_vocab: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DedupArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum Hamming distance counted as a duplicate.
    #[arg(long, default_value_t = 3)]
    pub threshold: u32,
    #[arg(long, default_value_t = 4)]
    pub shingle_len: usize,
    /// Only compare documents that share a source.
    #[arg(long)]
    pub by_source: bool,
    /// Duplicate pairs as JSONL.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BpeCommand {
    /// Train a byte-level BPE tokenizer.
    Train(BpeTrainArgs),
    /// Encode documents, or count their tokens.
    Encode(BpeEncodeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BpeTrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target vocabulary size, at least 256.
    #[arg(long)]
    pub vocab: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BpeEncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub count_only: bool,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MixArgs {
    /// Mixture spec (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Tokenizer for token budgets. Byte-level when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Materialized documents in manifest order.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sub_block_by: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum ScalingCommand {
    /// Fit loss against log compute from a CSV of `flops,loss`.
    Fit(ScalingFitArgs),
    /// Predict loss at a compute budget.
    Predict(ScalingPredictArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ScalingFitArgs {
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ScalingPredictArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, conflicts_with_all = ["params", "tokens"])]
    pub flops: Option<f64>,
    #[arg(long, requires = "tokens")]
    pub params: Option<f64>,
    #[arg(long, requires = "params")]
    pub tokens: Option<f64>,
    #[arg(long, default_value_t = 6.0)]
    pub per_param_token: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Train an n-gram reference model.
    Train(OracleTrainArgs),
    /// Per-document entropy under a trained model.
    Score(OracleScoreArgs),
    /// Cross-source perplexity matrix.
    Matrix(OracleMatrixArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OracleTrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = corpusforge::oracle::DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = corpusforge::oracle::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Score only the text after the `output_offset` meta byte offset.
    #[arg(long)]
    pub output_only: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleMatrixArgs {
    /// One JSONL file per source; the file stem is the label.
    #[arg(long, num_args = 2.., required = true)]
    pub sources: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = corpusforge::oracle::DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = corpusforge::oracle::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = corpusforge::oracle::DEFAULT_HOLDOUT)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    ZeroShot,
    FiveShot,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::ZeroShot => Mode::ZeroShot,
            ModeArg::FiveShot => Mode::FiveShot,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct SelectArgs {
    #[command(subcommand)]
    #[serde(skip)]
    pub command: Option<SelectCommand>,
    /// Entropy scores as JSONL (`id`, `entropy`, optional `tokens`).
    #[arg(long, required = true)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = corpusforge::selector::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::ZeroShot)]
    pub mode: ModeArg,
    /// Mean entropy of the pre-training corpus under the oracle.
    #[arg(long, required = true)]
    pub pretrain_entropy: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub band_low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub band_high: Option<f64>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Scale the cluster-size floor and sample size to the input size.
    #[arg(long)]
    pub desk_scale: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SelectCommand {
    /// Copy the sampled documents of a selection out of a corpus.
    Extract(ExtractArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EloCommand {
    /// Replay pairwise rankings into Elo ratings.
    Run(EloArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EloArgs {
    #[arg(long)]
    pub rankings: PathBuf,
    /// One model name per line.
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = corpusforge::elo::DEFAULT_K)]
    pub k: f64,
    #[arg(long, default_value_t = corpusforge::elo::DEFAULT_INITIAL)]
    pub initial: f64,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `input` in the config.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Overrides `output_dir` in the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated stage list; overrides `stages` in the config.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub stages: Option<Vec<StageName>>,
    #[arg(long)]
    pub density_threshold: Option<f64>,
    #[arg(long)]
    pub min_cjk_chars: Option<usize>,
    #[arg(long)]
    pub dedup_threshold: Option<u32>,
    #[arg(long)]
    pub by_source: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Clean,
    Dedup,
    Mix,
}

impl StageName {
    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Clean => "clean",
            StageName::Dedup => "dedup",
            StageName::Mix => "mix",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum TestkitCommand {
    /// Generate a labelled synthetic corpus.
    Gen(TestkitGenArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct TestkitGenArgs {
    /// Fixture spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

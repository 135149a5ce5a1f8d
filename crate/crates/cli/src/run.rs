//! Plumbing shared by every subcommand: error classes, run manifests and
//! chunked JSONL streaming.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use corpusforge::jsonl::{JsonlReader, Record, RecordError};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Records are read and processed this many at a time.
pub const CHUNK: usize = 4096;

/// A configuration or invocation problem (exit status 2). Anything else
/// that fails a run is a data error (exit status 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl fmt::Display) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

/// Reads a JSON config file. Unreadable or malformed files are usage errors.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of the compact JSON form. Object keys serialize sorted, so equal
/// configs hash equally regardless of field order in the source file.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(config)?)?;
    Ok(format!("{:x}", Sha256::digest(canonical.as_bytes())))
}

pub fn open_records<T: Record>(path: &Path) -> Result<JsonlReader<BufReader<File>, T>> {
    JsonlReader::open(path).with_context(|| format!("opening {}", path.display()))
}

/// Counts and reports malformed input records.
#[derive(Debug, Default)]
pub struct Skipped {
    pub count: u64,
    /// Count without printing, for a second pass over the same input.
    pub silent: bool,
}

impl Skipped {
    pub fn report(&mut self, path: &Path, err: &RecordError) {
        self.note(path, &err.to_string());
    }

    pub fn note(&mut self, path: &Path, message: &str) {
        if !self.silent {
            eprintln!("error: {}: {message}", path.display());
        }
        self.count += 1;
    }

    /// Turns skipped records into a data error once outputs are written.
    pub fn into_result(self) -> Result<()> {
        if self.count > 0 {
            anyhow::bail!("{} malformed record(s) skipped", self.count);
        }
        Ok(())
    }
}

/// Pulls up to `CHUNK` well-formed records, reporting malformed ones.
/// Returns an empty vector at end of stream.
pub fn next_chunk<T, I>(records: &mut I, path: &Path, skipped: &mut Skipped) -> Vec<T>
where
    I: Iterator<Item = Result<T, RecordError>>,
{
    let mut out = Vec::with_capacity(CHUNK);
    for item in records.by_ref() {
        match item {
            Ok(rec) => out.push(rec),
            Err(e) => skipped.report(path, &e),
        }
        if out.len() == CHUNK {
            break;
        }
    }
    out
}

pub fn read_all<T: Record>(path: &Path, skipped: &mut Skipped) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in open_records::<T>(path)? {
        match item {
            Ok(rec) => out.push(rec),
            Err(e) => skipped.report(path, &e),
        }
    }
    Ok(out)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    output.with_file_name(name)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_ms: u64,
    pub counts: Value,
}

/// Collects manifest fields over the course of a run.
pub struct Run {
    started: Instant,
    manifest: RunManifest,
}

impl Run {
    pub fn start<C: Serialize>(subcommand: &str, config: &C) -> Result<Self> {
        Ok(Run {
            started: Instant::now(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                config_hash: config_hash(config)?,
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed: None,
                version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_ms: 0,
                counts: Value::Null,
            },
        })
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn counts<T: Serialize>(&mut self, counts: &T) -> Result<&mut Self> {
        self.manifest.counts = serde_json::to_value(counts)?;
        Ok(self)
    }

    /// Writes the manifest to `path`, or to stderr when `None`.
    pub fn finish(mut self, path: Option<&Path>) -> Result<()> {
        self.manifest.wall_time_ms = self.started.elapsed().as_millis() as u64;
        match path {
            Some(p) => write_json(p, &self.manifest),
            None => {
                let mut err = std::io::stderr().lock();
                writeln!(err, "{}", serde_json::to_string(&self.manifest)?)?;
                Ok(())
            }
        }
    }
}

//! Run context: output directory, seed, config echo, and the run manifest.
//!
//! Every artifact embeds the `run` block (command, version, seed, config),
//! and each command finishes by writing `manifest.json` with input
//! checksums and the produced file list. Nothing here depends on wall-clock
//! time, so identical runs produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Flag-by-flag echo of the effective configuration.
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct ManifestEntry<'a> {
    run: &'a RunInfo,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

pub struct RunContext {
    pub out_dir: PathBuf,
    pub run: RunInfo,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn new(command: &str, out_dir: &Path, seed: u64) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(RunContext {
            out_dir: out_dir.to_path_buf(),
            run: RunInfo {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config: BTreeMap::new(),
            },
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn config(&mut self, key: &str, value: impl ToString) {
        self.run.config.insert(key.to_string(), value.to_string());
    }

    /// Record an input file with its checksum.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let mut file = fs::File::open(path)
            .with_context(|| format!("cannot read input {}", path.display()))?;
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 65536];
        let mut bytes = 0u64;
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            bytes += n as u64;
            hasher.update(&buf[..n]);
        }
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hex::encode(hasher.finalize()),
            bytes,
        });
        Ok(())
    }

    /// Write a JSON artifact with the run block embedded at the top level.
    pub fn write_json<T: Serialize>(&mut self, name: &str, payload: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Artifact<'a, T> {
            run: &'a RunInfo,
            #[serde(flatten)]
            payload: &'a T,
        }
        let path = self.out_dir.join(name);
        let body = serde_json::to_string_pretty(&Artifact { run: &self.run, payload })?;
        fs::write(&path, body + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Open a CSV artifact writer; the file is registered as an output.
    pub fn csv_writer(&mut self, name: &str) -> Result<csv::Writer<fs::File>> {
        let path = self.out_dir.join(name);
        let file = fs::File::create(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(csv::Writer::from_writer(file))
    }

    /// Register a file produced outside the context helpers.
    pub fn register_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Write raw bytes (JSONL reports and similar line-oriented artifacts).
    pub fn write_raw(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Finalize the run: merge this command's entry into `manifest.json`.
    ///
    /// The manifest keys entries by command, so a directory shared by
    /// several pipeline stages records the state of each one; partially
    /// completed pipelines are visible as missing keys.
    pub fn finish(mut self) -> Result<()> {
        self.outputs.push("manifest.json".to_string());
        let entry = ManifestEntry {
            run: &self.run,
            inputs: std::mem::take(&mut self.inputs),
            outputs: self.outputs.clone(),
        };
        let path = self.out_dir.join("manifest.json");
        let mut runs: BTreeMap<String, serde_json::Value> = fs::read_to_string(&path)
            .ok()
            .and_then(|body| serde_json::from_str::<serde_json::Value>(&body).ok())
            .and_then(|v| {
                serde_json::from_value(v.get("runs")?.clone()).ok()
            })
            .unwrap_or_default();
        runs.insert(self.run.command.clone(), serde_json::to_value(&entry)?);
        let body = serde_json::to_string_pretty(&serde_json::json!({ "runs": runs }))?;
        fs::write(path, body + "\n")?;
        Ok(())
    }
}

/// Parse a duration like `30s`, `5m`, `1h`, or plain seconds.
pub fn parse_duration_s(s: &str) -> Result<f64> {
    let s = s.trim();
    let (num, mult) = match s.chars().last() {
        Some('s') => (&s[..s.len() - 1], 1.0),
        Some('m') => (&s[..s.len() - 1], 60.0),
        Some('h') => (&s[..s.len() - 1], 3600.0),
        Some('d') => (&s[..s.len() - 1], 86_400.0),
        _ => (s, 1.0),
    };
    let v: f64 = num
        .parse()
        .with_context(|| format!("unparseable duration {s:?}"))?;
    anyhow::ensure!(v > 0.0, "duration must be positive: {s:?}");
    Ok(v * mult)
}

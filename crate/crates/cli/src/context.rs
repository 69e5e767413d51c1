//! Run bookkeeping: input digests, atomic output writes, stage timings, and
//! the manifest document written at the end of every command.

use anyhow::{Context as _, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write via a temp file and rename so consumers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

/// The manifest document. Stage timings are wall-clock measurements and the
/// only non-reproducible fields; everything else is a pure function of the
/// inputs.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    config_digest: &'a str,
    inputs: Vec<InputRecord>,
    counters: &'a BTreeMap<String, u64>,
    timings_ms: &'a BTreeMap<String, u64>,
    outputs: Vec<String>,
}

pub struct RunContext {
    pub cfg: RunConfig,
    pub config_digest: String,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<PathBuf>,
    counters: BTreeMap<String, u64>,
    timings: BTreeMap<String, u64>,
}

impl RunContext {
    pub fn new(cfg: RunConfig) -> Self {
        let config_digest = cfg.digest();
        Self {
            cfg,
            config_digest,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counters: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    /// Read an input file, recording its digest in the manifest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes =
            std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push((path.to_path_buf(), sha256_hex(&bytes)));
        Ok(bytes)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.cfg.output.join(name)
    }

    /// Write an output file atomically, recording it in the manifest.
    pub fn write_output(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_path(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let value = f(self)?;
        self.timings.insert(stage.to_string(), start.elapsed().as_millis() as u64);
        Ok(value)
    }

    pub fn counter(&mut self, name: &str, value: u64) {
        self.counters.insert(name.to_string(), value);
    }

    /// Write `manifest_<command>.json` and finish the run.
    pub fn finish(mut self, command: &str) -> Result<()> {
        let manifest = Manifest {
            command,
            config: &self.cfg,
            config_digest: &self.config_digest,
            inputs: self
                .inputs
                .iter()
                .map(|(p, d)| InputRecord { path: p.display().to_string(), sha256: d.clone() })
                .collect(),
            counters: &self.counters,
            timings_ms: &self.timings,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let path = self.cfg.output.join(format!("manifest_{command}.json"));
        write_atomic(&path, json.as_bytes())?;
        self.outputs.push(path);
        Ok(())
    }
}

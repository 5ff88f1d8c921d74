//! `manifest.json`: what ran, on which inputs, and how long it took.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::write_json;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Input path → SHA-256 of its bytes.
    pub inputs: IndexMap<String, String>,
    /// Output file name → SHA-256, for files written next to the manifest.
    pub outputs: IndexMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub runtime_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).with_context(|| format!("cannot read {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(hex::encode(h.finalize()))
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self { command: command.into(), config, inputs: Vec::new(), seed, started: Instant::now() }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Hashes inputs and the named outputs in `dir`, then writes the manifest there.
    pub fn finish(self, dir: &Path, outputs: &[&str]) -> Result<RunManifest> {
        let mut inputs = IndexMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        let mut outs = IndexMap::new();
        for name in outputs {
            outs.insert((*name).to_owned(), sha256_file(&dir.join(name))?);
        }
        let m = RunManifest {
            command: self.command,
            config: self.config,
            inputs,
            outputs: outs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            runtime_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&dir.join(MANIFEST_NAME), &m)?;
        Ok(m)
    }
}

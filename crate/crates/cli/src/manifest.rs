//! Reproducibility record written next to every output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xdsp::util::write_atomic;

use crate::commands::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved settings of the run: the training configuration for
    /// commands that train or evaluate, the command's own settings otherwise.
    pub config: serde_json::Value,
    /// Command settings outside the training configuration.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub options: serde_json::Value,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let mut f = File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h).map_err(|e| Failure::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

/// Collects inputs and outputs of one command.
pub struct Recorder {
    command: &'static str,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Recorder {
    pub fn new(command: &'static str) -> Self {
        Recorder {
            command,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Writes `bytes` atomically, creating parent directories as needed.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), Failure> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        }
        write_atomic(path, bytes)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    /// Records a file some other routine already wrote atomically.
    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(
        self,
        path: &Path,
        config: serde_json::Value,
        options: serde_json::Value,
        seed: u64,
    ) -> Result<(), Failure> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            config,
            options,
            inputs: self.inputs,
            seed,
            outputs: self.outputs,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(xdsp::Error::from)?;
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        }
        write_atomic(path, &json)?;
        Ok(())
    }
}

/// `<file>.manifest.json` beside a file output.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// `manifest.json` inside a directory output.
pub fn inside(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn is_manifest(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n == "manifest.json" || n.ends_with(".manifest.json"))
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use granalign::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timestamps {
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

/// Provenance record written next to the outputs of every run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub subcommand: &'static str,
    pub flags: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timestamps: Timestamps,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Files directly or transitively below `dir`, sorted.
pub fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub struct Recorder {
    subcommand: &'static str,
    flags: serde_json::Value,
    seeds: Vec<u64>,
    started: f64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new<F: Serialize>(subcommand: &'static str, flags: &F) -> Self {
        Recorder {
            subcommand,
            flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
            seeds: Vec::new(),
            started: now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seeds(&mut self, seeds: impl IntoIterator<Item = u64>) {
        self.seeds.extend(seeds);
    }

    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.push(p.into());
    }

    pub fn inputs(&mut self, ps: impl IntoIterator<Item = PathBuf>) {
        self.inputs.extend(ps);
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }

    pub fn outputs(&mut self, ps: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(ps);
    }

    /// Digests everything recorded and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.inputs.sort();
        self.inputs.dedup();
        self.outputs.sort();
        self.outputs.dedup();
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            flags: self.flags,
            seeds: self.seeds,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            timestamps: Timestamps {
                started_unix_s: self.started,
                finished_unix_s: now(),
            },
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("run manifest", e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// `<file>.manifest.json` for single-file outputs.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

//! Run manifests, per-phase timing and output-directory handling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bundle::write_text;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Creates `dir`, refusing to touch a non-empty directory unless `force`,
/// in which case its previous contents are removed.
pub fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?.next().is_some();
        if non_empty {
            if !force {
                return Err(CliError::Usage(format!(
                    "output directory {} is not empty (use --force to replace it)",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Files below `dir` in sorted order, relative to `dir`.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| CliError::io(dir, e))?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    /// The complete argument list that reproduces the run.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, except the manifest and timing.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(argv: &[String], config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            argv: argv.to_vec(),
            config,
            seeds: Vec::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Hashes the outputs under `dir` and writes the manifest there.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        for rel in list_files(dir)? {
            let file = rel.file_name().and_then(|f| f.to_str()).unwrap_or_default();
            if file == MANIFEST || file == TIMING {
                continue;
            }
            self.outputs.insert(rel.display().to_string(), sha256_file(&dir.join(&rel))?);
        }
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_text(&dir.join(MANIFEST), &(text + "\n"))
    }
}

/// Wall-clock seconds per named phase, written apart from the manifest so
/// that reruns leave the manifest unchanged.
#[derive(Debug, Default, Serialize)]
pub struct Timing {
    pub phases: BTreeMap<String, f64>,
}

impl Timing {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.phases.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn add(&mut self, phase: &str, secs: f64) {
        *self.phases.entry(phase.to_string()).or_default() += secs;
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("timing serializes");
        write_text(&dir.join(TIMING), &(text + "\n"))
    }
}

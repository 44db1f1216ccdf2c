//! Scenario directories: `scenario.txt`, `mask.txt`, `truth.csv` and one
//! bundle per replicate in `rep_000`, `rep_001`, ...

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const SCENARIO: &str = "scenario.txt";
pub const FITS: &str = "fits";

pub fn replicate_dir(root: &Path, rep: usize) -> PathBuf {
    root.join(replicate_name(rep))
}

pub fn replicate_name(rep: usize) -> String {
    format!("rep_{rep:03}")
}

pub fn is_scenario(dir: &Path) -> bool {
    dir.join(SCENARIO).is_file()
}

/// Replicate directories in index order; they must be contiguous from 0.
pub fn replicates(root: &Path) -> Result<Vec<PathBuf>> {
    let mut names: Vec<String> = fs::read_dir(root)
        .map_err(|e| CliError::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter(|n| n.starts_with("rep_"))
        .collect();
    names.sort();
    for (i, n) in names.iter().enumerate() {
        if *n != replicate_name(i) {
            return Err(CliError::Data(format!(
                "{}: replicate directories are not contiguous (expected {}, found {n})",
                root.display(),
                replicate_name(i)
            )));
        }
    }
    if names.is_empty() {
        return Err(CliError::Data(format!("{}: no replicate directories", root.display())));
    }
    Ok(names.into_iter().map(|n| root.join(n)).collect())
}

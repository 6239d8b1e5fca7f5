use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use occlubench::dataio::{read_subset, RunConfig};
use occlubench::SubsetIndex;

pub fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

/// Fails with every problem at once.
pub fn check_config(cfg: &RunConfig) -> Result<()> {
    let problems = cfg.problems();
    if problems.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
    bail!("invalid config ({} problem(s)):\n{}", problems.len(), list.join("\n"))
}

pub fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if (0.0..=1.0).contains(&f) {
        Ok(f)
    } else {
        Err(format!("fraction {f} outside [0, 1]"))
    }
}

pub fn load_subset(path: Option<&PathBuf>) -> Result<Option<SubsetIndex>> {
    path.map(|p| read_subset(p).with_context(|| format!("reading subset {}", p.display())))
        .transpose()
}

/// `out` with its extension replaced.
pub fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

/// Parses a lowercase enum through its serde names.
pub fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

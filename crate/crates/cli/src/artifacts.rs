//! Run-directory plumbing shared by every subcommand. Each run directory
//! carries a `config.json` echoing the fully resolved configuration, so any
//! artifact is reproducible from its directory alone; stage completion is
//! detected by config equality plus artifact presence.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use bundle_uq::bayes::{LikelihoodSpec, PosteriorHandle};
use bundle_uq::models::{ModelId, ModelSpec};
use bundle_uq::presets::Preset;
use bundle_uq::{Error, Result};

pub const CONFIG: &str = "config.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const LOSS: &str = "loss.csv";
pub const TABLES: &str = "tables.json";
pub const TABLE: &str = "table.csv";
pub const POSTERIOR: &str = "posterior.json";
pub const PREDICTIVE: &str = "predictive.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CHAIN: &str = "chain.csv";
pub const SUMMARY: &str = "summary.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";

/// On-disk posterior artifact: model, scale, likelihood, and the weight
/// posterior itself. Everything downstream (eval, inverse, plots) reads this
/// file without needing the original checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorArtifact {
    pub model_id: ModelId,
    pub preset: Preset,
    pub method: String,
    pub seed: u64,
    pub spec: ModelSpec,
    pub likelihood: LikelihoodSpec,
    pub handle: PosteriorHandle,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Read and parse a JSON artifact; errors name the expected file.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("cannot parse {what} {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Write the run's `config.json`. Refuses to overwrite an echo left by a
/// different command, so one run directory never silently absorbs another.
pub fn write_config<T: Serialize>(dir: &Path, command: &str, config: &T) -> Result<()> {
    let path = dir.join(CONFIG);
    if path.exists() {
        let existing: serde_json::Value = read_json(&path, "existing config")?;
        if let Some(other) = existing.get("command").and_then(|c| c.as_str()) {
            if other != command {
                return Err(Error::Config(format!(
                    "{} already holds a '{other}' run's config.json; choose a fresh directory",
                    dir.display()
                )));
            }
        }
    }
    write_json(&path, config)
}

/// True when `dir` already holds a `config.json` equal to `config` and every
/// listed artifact exists. Upstream artifacts enter `config` as content
/// fingerprints, so a changed input re-runs the stage.
pub fn stage_complete<T: Serialize>(dir: &Path, config: &T, outputs: &[&str]) -> bool {
    let Ok(text) = fs::read_to_string(dir.join(CONFIG)) else {
        return false;
    };
    let Ok(existing) = serde_json::from_str::<serde_json::Value>(&text) else {
        return false;
    };
    let Ok(wanted) = serde_json::to_value(config) else {
        return false;
    };
    existing == wanted && outputs.iter().all(|name| dir.join(name).exists())
}

/// FNV-1a over a file's bytes, as hex. Cheap stand-in for a content hash in
/// stage configs.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{h:016x}"))
}

/// Write a CSV file: header line, then one line per row. Floats use the
/// shortest round-trip form.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut text = String::with_capacity(4096);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                text.push(',');
            }
            first = false;
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// Read a CSV written by [`write_csv`]: the header fields and all-numeric
/// rows.
pub fn read_csv(path: &Path, what: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{what} {} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.parse::<f64>().map_err(|e| {
                    Error::Config(format!(
                        "{what} {} line {}: bad number {f:?}: {e}",
                        path.display(),
                        i + 2
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

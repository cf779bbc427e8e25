use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use styleval::aggregate::{GmParams, Granularity};

/// Optional JSON run configuration. Any value given on the command line
/// wins over the same key here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub x0: Option<PathBuf>,
    pub x1: Option<PathBuf>,
    pub label0: Option<String>,
    pub label1: Option<String>,
    pub embeddings: Option<PathBuf>,
    pub dim: Option<usize>,
    pub classifier: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub idf: Option<PathBuf>,
    pub transfer: Option<PathBuf>,
    pub transfers: Option<Vec<PathBuf>>,
    pub pairs: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub reports: Option<Vec<PathBuf>>,
    pub candidates: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub order: Option<usize>,
    pub min_count: Option<u64>,
    pub seed: Option<u64>,
    pub granularity: Option<Granularity>,
    pub params: Option<GmParams>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("{} is not a valid run config", path.display()))?;
        if let Some(p) = &cfg.params {
            p.validate()?;
        }
        Ok(cfg)
    }
}

/// The command-line value, else the config value, else an error naming
/// both spellings.
pub fn pick<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    match flag.or(config) {
        Some(v) => Ok(v),
        None => bail!("missing --{} (or \"{}\" in the config file)", name, name.replace('-', "_")),
    }
}

/// Like [`pick`] for list-valued options, where an empty flag list means
/// "not given".
pub fn pick_list<T>(flag: Vec<T>, config: Option<Vec<T>>, name: &str) -> Result<Vec<T>> {
    if !flag.is_empty() {
        return Ok(flag);
    }
    match config {
        Some(v) if !v.is_empty() => Ok(v),
        _ => bail!("missing --{} (or \"{}\" in the config file)", name, name.replace('-', "_")),
    }
}

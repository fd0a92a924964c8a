//! Config file loading and flag > file > default resolution.

use std::path::Path;

use anyhow::{Context, Result};
use ifaa::config::AnalysisConfig;
use serde::Deserialize;

use crate::args::AnalysisArgs;

/// Run-level keys a config file may carry next to the analysis knobs.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileExtras {
    pub x_cols: Option<Vec<String>>,
    pub w_cols: Option<Vec<String>>,
    pub replicates: Option<usize>,
    pub heatmap_floor: Option<usize>,
}

const EXTRA_KEYS: [&str; 4] = ["x_cols", "w_cols", "replicates", "heatmap_floor"];

/// Parses a flat TOML table holding `AnalysisConfig` fields and the run-level
/// extras. Absent keys keep their defaults; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<(AnalysisConfig, FileExtras)> {
    let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
    let mut extra = toml::Table::new();
    for key in EXTRA_KEYS {
        if let Some(v) = table.remove(key) {
            extra.insert(key.to_string(), v);
        }
    }
    let extras: FileExtras = toml::Value::Table(extra).try_into()?;
    let config: AnalysisConfig = toml::Value::Table(table).try_into()?;
    Ok((config, extras))
}

pub fn load_config(path: &Path) -> Result<(AnalysisConfig, FileExtras)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("config {}", path.display()))
}

/// Effective analysis config: flags override the file, the file overrides
/// the defaults. The result is validated.
pub fn resolve(args: &AnalysisArgs) -> Result<(AnalysisConfig, FileExtras)> {
    let (mut config, extras) = match &args.config {
        Some(path) => load_config(path)?,
        None => (AnalysisConfig::default(), FileExtras::default()),
    };
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.refs {
        config.r_refs = v;
    }
    if let Some(v) = args.perms {
        config.n_perms = v;
    }
    if let Some(v) = args.seed {
        config.master_seed = v;
    }
    if let Some(v) = args.min_overlap {
        config.min_overlap = Some(v);
    }
    if let Some(v) = args.bootstrap {
        config.bootstrap_reps = v;
    }
    if let Some(v) = args.ci_level {
        config.ci_level = v;
    }
    config.validate()?;
    Ok((config, extras))
}

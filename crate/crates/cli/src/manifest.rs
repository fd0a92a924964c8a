use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use ifaa::config::AnalysisConfig;
use ifaa::sim::SimScenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    /// What the file was used as: `counts`, `covariates`, `config`,
    /// `scenario` or `external:<name>`.
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    /// Records the file under its absolute path so a rerun works from any directory.
    pub fn hash(role: &str, path: &Path) -> Result<Self> {
        let path = std::fs::canonicalize(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(InputFile { role: role.to_string(), sha256: sha256_file(&path)?, path })
    }

    /// Fails if the file is gone or its contents changed.
    pub fn verify(&self) -> Result<()> {
        let now = sha256_file(&self.path)?;
        if now != self.sha256 {
            bail!("{} ({}) changed since the recorded run", self.path.display(), self.role);
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

/// Everything a command needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Settings {
    Simulate {
        scenario: SimScenario,
        replicate: u64,
    },
    Analyze {
        config: AnalysisConfig,
        x_cols: Vec<String>,
        w_cols: Vec<String>,
        heatmap_floor: usize,
    },
    Benchmark {
        config: AnalysisConfig,
        replicates: usize,
        scenarios: Vec<SimScenario>,
        /// Names of the external methods, each backed by an `external:<name>` input.
        external: Vec<String>,
    },
}

impl Settings {
    pub fn master_seed(&self) -> u64 {
        match self {
            Settings::Simulate { scenario, .. } => scenario.seed,
            Settings::Analyze { config, .. } | Settings::Benchmark { config, .. } => config.master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub settings: Settings,
    pub master_seed: u64,
    pub threads: usize,
    pub inputs: Vec<InputFile>,
    pub timings: Vec<Timing>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub exit_code: i32,
    pub notes: Vec<String>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(settings: Settings, inputs: Vec<InputFile>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: settings.master_seed(),
            settings,
            threads: rayon::current_num_threads(),
            inputs,
            timings: vec![],
            outputs: vec![],
            exit_code: 0,
            notes: vec![],
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn time(&mut self, phase: &str, seconds: f64) {
        self.timings.push(Timing { phase: phase.to_string(), seconds });
    }

    pub fn input(&self, role: &str) -> Result<&InputFile> {
        self.inputs.iter().find(|i| i.role == role).with_context(|| format!("manifest has no '{role}' input"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
    }
}

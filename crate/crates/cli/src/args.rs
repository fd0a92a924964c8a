use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ifaa", version, about = "Absolute-abundance association analysis for microbiome counts")]
pub struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads; defaults to all available cores.
    #[arg(long, env = "IFAA_THREADS", global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one confounded-library-size dataset from a scenario file.
    Simulate(SimulateArgs),
    /// Run both phases on a count table and a covariate table.
    Analyze(AnalyzeArgs),
    /// Score methods on simulated replicates of every scenario in a directory.
    Benchmark(BenchmarkArgs),
    /// Repeat the run recorded in a manifest.json into a new directory.
    Rerun(RerunArgs),
}

/// Knobs shared by `analyze` and `benchmark`. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// TOML file with analysis settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Family-wise error rate for set-A selection.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of random reference taxa.
    #[arg(long = "refs", value_name = "R")]
    pub refs: Option<usize>,
    /// Number of permutations.
    #[arg(long = "perms", value_name = "P")]
    pub perms: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum samples where both taxa of a ratio are nonzero.
    #[arg(long)]
    pub min_overlap: Option<usize>,
    /// Bootstrap replicates for the confidence intervals.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub ci_level: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file.
    pub scenario: PathBuf,
    /// Replicate index; replicate r matches replicate r of `benchmark`.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Samples-by-taxa count CSV (first column sample ids).
    pub counts: PathBuf,
    /// Covariate CSV (first column sample ids).
    pub covariates: PathBuf,
    /// Tested covariates (X), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub x_cols: Vec<String>,
    /// Adjustment covariates (W), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub w_cols: Vec<String>,
    /// Heatmap rows need at least this selection count (minimum 1).
    #[arg(long)]
    pub heatmap_floor: Option<usize>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Directory of scenario TOML files, run in file-name order.
    pub scenario_dir: PathBuf,
    /// Replicate datasets per scenario.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Extra method from precomputed selections, as NAME=CSV.
    #[arg(long = "external", value_name = "NAME=CSV")]
    pub external: Vec<String>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

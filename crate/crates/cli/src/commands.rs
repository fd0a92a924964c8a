use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ifaa::benchmark::{default_methods, run_benchmark, External, SelectionMethod};
use ifaa::data::{load_count_table, load_covariates, validate_dataset};
use ifaa::phase1::run_phase_one;
use ifaa::phase2::{choose_reference, estimate_associations, AssociationEstimates, EstimateRow, ReferenceCriteria};
use ifaa::sim::{BenchmarkDesign, SimScenario};

use crate::args::{AnalyzeArgs, BenchmarkArgs, SimulateArgs};
use crate::config::resolve;
use crate::manifest::{InputFile, RunManifest, Settings};

/// Exit status for a run that finished but could not use an independent
/// reference as intended (empty set B or a reference that failed the criteria).
pub const EXIT_DEGRADED: i32 = 2;

pub const DEFAULT_REPLICATES: usize = 20;

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn plan_simulate(args: &SimulateArgs) -> Result<(Settings, Vec<InputFile>)> {
    let mut scenario =
        SimScenario::load(&args.scenario).with_context(|| format!("scenario {}", args.scenario.display()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let inputs = vec![InputFile::hash("scenario", &args.scenario)?];
    Ok((Settings::Simulate { scenario, replicate: args.replicate }, inputs))
}

pub fn plan_analyze(args: &AnalyzeArgs) -> Result<(Settings, Vec<InputFile>)> {
    let (config, extras) = resolve(&args.analysis)?;
    let x_cols = if args.x_cols.is_empty() { extras.x_cols.unwrap_or_default() } else { args.x_cols.clone() };
    let w_cols = if args.w_cols.is_empty() { extras.w_cols.unwrap_or_default() } else { args.w_cols.clone() };
    if x_cols.is_empty() {
        bail!("no tested covariate given; pass --x-cols or set x_cols in the config file");
    }
    let heatmap_floor = args.heatmap_floor.or(extras.heatmap_floor).unwrap_or(1);
    let mut inputs = vec![InputFile::hash("counts", &args.counts)?, InputFile::hash("covariates", &args.covariates)?];
    if let Some(c) = &args.analysis.config {
        inputs.push(InputFile::hash("config", c)?);
    }
    Ok((Settings::Analyze { config, x_cols, w_cols, heatmap_floor }, inputs))
}

/// Scenario files (`*.toml`) in a directory, sorted by file name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading scenario directory {}", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.with_context(|| format!("reading scenario directory {}", dir.display()))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "toml") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no *.toml scenario files in {}", dir.display());
    }
    Ok(files)
}

pub fn plan_benchmark(args: &BenchmarkArgs) -> Result<(Settings, Vec<InputFile>)> {
    let (config, extras) = resolve(&args.analysis)?;
    let replicates = args.replicates.or(extras.replicates).unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        bail!("invalid value for `replicates`: need at least 1");
    }
    let mut inputs = Vec::new();
    let mut scenarios = Vec::new();
    for path in scenario_files(&args.scenario_dir)? {
        scenarios.push(SimScenario::load(&path).with_context(|| format!("scenario {}", path.display()))?);
        inputs.push(InputFile::hash("scenario", &path)?);
    }
    let mut external = Vec::new();
    for spec in &args.external {
        let Some((name, path)) = spec.split_once('=') else {
            bail!("--external expects NAME=CSV, got '{spec}'");
        };
        if name.is_empty() || external.iter().any(|n| n == name) {
            bail!("--external names must be unique and nonempty ('{name}')");
        }
        external.push(name.to_string());
        inputs.push(InputFile::hash(&format!("external:{name}"), Path::new(path))?);
    }
    if let Some(c) = &args.analysis.config {
        inputs.push(InputFile::hash("config", c)?);
    }
    Ok((Settings::Benchmark { config, replicates, scenarios, external }, inputs))
}

/// Runs a planned command into `out` and writes its manifest. Returns the exit code.
pub fn execute(settings: Settings, inputs: Vec<InputFile>, out: &Path) -> Result<i32> {
    prepare_out(out)?;
    let mut manifest = RunManifest::new(settings.clone(), inputs);
    let start = Instant::now();
    match &settings {
        Settings::Simulate { scenario, replicate } => simulate(scenario, *replicate, out, &mut manifest)?,
        Settings::Analyze { config, x_cols, w_cols, heatmap_floor } => {
            analyze(config, x_cols, w_cols, *heatmap_floor, out, &mut manifest)?
        }
        Settings::Benchmark { config, replicates, scenarios, external } => {
            benchmark(config, *replicates, scenarios, external, out, &mut manifest)?
        }
    }
    manifest.time("total", start.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(manifest.exit_code)
}

fn simulate(scenario: &SimScenario, replicate: u64, out: &Path, manifest: &mut RunManifest) -> Result<()> {
    let study = BenchmarkDesign::new(scenario)?.replicate(replicate)?;
    manifest.outputs = study.write(out)?;
    manifest.notes.push(format!(
        "{} differential taxa of {}; sampling fractions c1={} c2={}",
        study.differential_ids().len(),
        study.truth.len(),
        scenario.c1,
        scenario.c2
    ));
    Ok(())
}

fn analyze(
    config: &ifaa::config::AnalysisConfig,
    x_cols: &[String],
    w_cols: &[String],
    heatmap_floor: usize,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let t = Instant::now();
    let counts_path = manifest.input("counts")?.path.clone();
    let cov_path = manifest.input("covariates")?.path.clone();
    let counts = load_count_table(&counts_path).with_context(|| format!("counts {}", counts_path.display()))?;
    let covariates =
        load_covariates(&cov_path, x_cols, w_cols).with_context(|| format!("covariates {}", cov_path.display()))?;
    let dataset = validate_dataset(&counts, &covariates, config)?;
    for d in dataset.dropped_samples.iter().map(|d| ("sample", d)).chain(dataset.dropped_taxa.iter().map(|d| ("taxon", d))) {
        manifest.notes.push(format!("dropped {} '{}': {}", d.0, d.1.id, d.1.reason));
    }
    manifest.time("validate", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let p1 = run_phase_one(&dataset, config)?;
    manifest.time("phase1", t.elapsed().as_secs_f64());
    p1.write_json(&out.join("phase1.json"))?;
    p1.write_heatmap(&dataset, heatmap_floor, &out.join("heatmap.csv"))?;
    log::info!("set A: {} taxa, set B: {} taxa, threshold {}", p1.set_a.len(), p1.set_b.len(), p1.threshold);

    let t = Instant::now();
    let estimates = if p1.set_b.is_empty() {
        let note = "set B is empty: no covariate-independent reference; lower alpha or check the data";
        log::warn!("{note}");
        manifest.notes.push(note.to_string());
        manifest.exit_code = EXIT_DEGRADED;
        unavailable(&p1.set_a, x_cols, config.ci_level, note)
    } else {
        let choice = choose_reference(&dataset, &p1, &ReferenceCriteria::default(), config)?;
        if choice.fallback {
            manifest.notes.push(format!("no set-B taxon met the reference criteria; fell back to '{}'", choice.taxon_id));
            manifest.exit_code = EXIT_DEGRADED;
        }
        manifest.notes.push(format!("reference taxon '{}'", choice.taxon_id));
        estimate_associations(&dataset, &p1, &choice.taxon_id, config)?
    };
    manifest.time("phase2", t.elapsed().as_secs_f64());
    estimates.write_csv(&out.join("estimates.csv"))?;
    estimates.write_json(&out.join("estimates.json"))?;
    manifest.outputs =
        ["phase1.json", "heatmap.csv", "estimates.csv", "estimates.json"].iter().map(|s| s.to_string()).collect();
    Ok(())
}

/// Placeholder rows for set-A taxa when no reference is available.
fn unavailable(set_a: &[String], x_cols: &[String], ci_level: f64, note: &str) -> AssociationEstimates {
    let rows = set_a
        .iter()
        .flat_map(|t| {
            x_cols.iter().map(move |c| EstimateRow {
                taxon_id: t.clone(),
                covariate: c.clone(),
                estimate: None,
                ci_lower: None,
                ci_upper: None,
                fold_change: None,
                n_used: 0,
                reference_taxon: "NA".into(),
                note: Some(note.to_string()),
            })
        })
        .collect();
    AssociationEstimates { reference_taxon: "NA".into(), ci_level, rows }
}

fn benchmark(
    config: &ifaa::config::AnalysisConfig,
    replicates: usize,
    scenarios: &[SimScenario],
    external: &[String],
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let mut methods: Vec<Box<dyn SelectionMethod>> = default_methods(config);
    for name in external {
        let path = manifest.input(&format!("external:{name}"))?.path.clone();
        methods.push(Box::new(External::load(name, &path).with_context(|| format!("external method {name}"))?));
    }
    let report = run_benchmark(scenarios, &methods, replicates, config)?;
    report.write_csv(&out.join("report.csv"))?;
    report.write_bias_csv(&out.join("bias.csv"))?;
    report.write_scores_csv(&out.join("scores.csv"))?;
    manifest.outputs = ["report.csv", "bias.csv", "scores.csv"].iter().map(|s| s.to_string()).collect();
    for s in scenarios {
        for m in &methods {
            let secs: Vec<f64> = report
                .scores
                .iter()
                .filter(|r| r.scenario == s.name && r.method == m.name())
                .map(|r| r.seconds)
                .collect();
            manifest.time(&format!("{}/{} per replicate", s.name, m.name()), secs.iter().sum::<f64>() / secs.len().max(1) as f64);
        }
    }
    let failures = report.scores.iter().filter(|s| s.error.is_some()).count();
    if failures > 0 {
        manifest.notes.push(format!("{failures} method runs failed; see scores.csv"));
    }
    Ok(())
}

/// Repeats a recorded run after checking that the inputs it reads are unchanged.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<i32> {
    let old = RunManifest::load(manifest_path)?;
    for input in &old.inputs {
        let needed = matches!(input.role.as_str(), "counts" | "covariates") || input.role.starts_with("external:");
        if needed {
            input.verify()?;
        }
    }
    execute(old.settings, old.inputs, out)
}

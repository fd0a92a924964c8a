//! Multi-scenario benchmark harness: simulate replicates, run each method,
//! score against the planted truth and aggregate.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::AnalysisConfig;
use crate::data::{validate_dataset, write_table};
use crate::error::{IfaaError, Result};
use crate::metrics::{bh_adjust, confusion, performance_metrics, wilcoxon_rank_sum, Confusion, Performance};
use crate::phase1::run_phase_one;
use crate::phase2::{choose_reference, estimate_associations, ReferenceCriteria};
use crate::rng::{derive_seed, DOMAIN_ANALYSIS};
use crate::sim::{BenchmarkDesign, SimScenario, SimulatedStudy};

/// FDR level used for the Wilcoxon baselines.
pub const BASELINE_FDR: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodOutput {
    pub selected: Vec<String>,
    /// Point estimates of the group effect for selected taxa, if the method gives any.
    pub estimates: Vec<(String, f64)>,
}

/// A differential-abundance method under benchmark.
pub trait SelectionMethod: Sync {
    fn name(&self) -> &str;
    fn run(&self, scenario: &SimScenario, replicate: u64, study: &SimulatedStudy) -> Result<MethodOutput>;
}

/// The two-phase pipeline with default reference criteria.
#[derive(Debug, Clone)]
pub struct Ifaa {
    pub config: AnalysisConfig,
    pub criteria: ReferenceCriteria,
    /// Run the estimation phase as well (needed for bias summaries).
    pub estimate: bool,
}

impl Ifaa {
    pub fn new(config: AnalysisConfig) -> Self {
        Ifaa { config, criteria: ReferenceCriteria::default(), estimate: true }
    }
}

impl SelectionMethod for Ifaa {
    fn name(&self) -> &str {
        "ifaa"
    }

    fn run(&self, _scenario: &SimScenario, replicate: u64, study: &SimulatedStudy) -> Result<MethodOutput> {
        let config = AnalysisConfig {
            master_seed: derive_seed(self.config.master_seed, DOMAIN_ANALYSIS, replicate),
            ..self.config.clone()
        };
        let dataset = validate_dataset(&study.observed_counts, &study.covariates, &config)?;
        let p1 = run_phase_one(&dataset, &config)?;
        let mut out = MethodOutput { selected: p1.set_a.clone(), estimates: vec![] };
        if !self.estimate || p1.set_a.is_empty() {
            return Ok(out);
        }
        if p1.set_b.is_empty() {
            log::warn!("replicate {replicate}: set B empty, estimation skipped");
            return Ok(out);
        }
        let choice = choose_reference(&dataset, &p1, &self.criteria, &config)?;
        let est = estimate_associations(&dataset, &p1, &choice.taxon_id, &config)?;
        let x = &dataset.covariates.x_names[0];
        out.estimates = est
            .rows
            .iter()
            .filter(|r| &r.covariate == x)
            .filter_map(|r| r.estimate.map(|e| (r.taxon_id.clone(), e)))
            .collect();
        Ok(out)
    }
}

/// Per-taxon Wilcoxon rank-sum between the two groups plus BH at q = 0.2,
/// on observed counts (`relative = false`) or per-sample proportions.
#[derive(Debug, Clone)]
pub struct Wilcoxon {
    pub relative: bool,
}

impl SelectionMethod for Wilcoxon {
    fn name(&self) -> &str {
        if self.relative {
            "wilcoxon_ra"
        } else {
            "wilcoxon_aa"
        }
    }

    fn run(&self, _scenario: &SimScenario, _replicate: u64, study: &SimulatedStudy) -> Result<MethodOutput> {
        let counts = study.observed_counts.counts();
        let group = study.covariates.x.column(0);
        let (n, k) = counts.shape();
        let totals: Vec<f64> = (0..n).map(|i| counts.row(i).sum()).collect();
        let value = |i: usize, t: usize| {
            let v = counts[(i, t)];
            if !self.relative {
                v
            } else if totals[i] > 0.0 {
                v / totals[i]
            } else {
                0.0
            }
        };
        let g0: Vec<usize> = (0..n).filter(|&i| group[i] == 0.0).collect();
        let g1: Vec<usize> = (0..n).filter(|&i| group[i] != 0.0).collect();
        if g0.is_empty() || g1.is_empty() {
            return Err(IfaaError::InvalidData("both groups need at least one sample".into()));
        }
        let p: Vec<f64> = (0..k)
            .map(|t| {
                let a: Vec<f64> = g0.iter().map(|&i| value(i, t)).collect();
                let b: Vec<f64> = g1.iter().map(|&i| value(i, t)).collect();
                wilcoxon_rank_sum(&a, &b)
            })
            .collect();
        let ids = study.observed_counts.taxon_ids();
        Ok(MethodOutput {
            selected: bh_adjust(&p, BASELINE_FDR).into_iter().map(|t| ids[t].clone()).collect(),
            estimates: vec![],
        })
    }
}

/// Selections produced elsewhere, imported from a CSV with columns
/// `replicate, taxon_id, selected` and an optional leading `scenario`.
#[derive(Debug, Clone)]
pub struct External {
    pub name: String,
    selections: HashMap<(Option<String>, u64), HashSet<String>>,
}

impl External {
    pub fn load(name: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| IfaaError::Serialization(format!("{}: {e}", path.display())))?;
        let headers = reader.headers().map_err(|e| IfaaError::Serialization(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let (Some(rep), Some(tax), Some(sel)) = (col("replicate"), col("taxon_id"), col("selected")) else {
            return Err(IfaaError::MissingColumn(format!("{}: need replicate, taxon_id, selected", path.display())));
        };
        let scen = col("scenario");
        let mut selections: HashMap<(Option<String>, u64), HashSet<String>> = HashMap::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| IfaaError::Serialization(e.to_string()))?;
            let parse_err = |column: &str, message: String| IfaaError::Parse {
                path: path.to_path_buf(),
                row: row + 2,
                column: column.into(),
                message,
            };
            let r: u64 = rec[rep].trim().parse().map_err(|e| parse_err("replicate", format!("{e}")))?;
            let s = match rec[sel].trim() {
                "1" | "true" | "TRUE" => true,
                "0" | "false" | "FALSE" => false,
                other => return Err(parse_err("selected", format!("'{other}' is not 0/1"))),
            };
            let entry = selections.entry((scen.map(|c| rec[c].trim().to_string()), r)).or_default();
            if s {
                entry.insert(rec[tax].trim().to_string());
            }
        }
        Ok(External { name: name.to_string(), selections })
    }
}

impl SelectionMethod for External {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, scenario: &SimScenario, replicate: u64, _study: &SimulatedStudy) -> Result<MethodOutput> {
        let hit = self
            .selections
            .get(&(Some(scenario.name.clone()), replicate))
            .or_else(|| self.selections.get(&(None, replicate)))
            .ok_or_else(|| IfaaError::InvalidData(format!("{}: no rows for replicate {replicate}", self.name)))?;
        let mut selected: Vec<String> = hit.iter().cloned().collect();
        selected.sort();
        Ok(MethodOutput { selected, estimates: vec![] })
    }
}

/// Score of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateScore {
    pub scenario: String,
    pub method: String,
    pub replicate: u64,
    pub confusion: Option<Confusion>,
    pub performance: Option<Performance>,
    pub error: Option<String>,
    /// (taxon, estimate, true effect) for differential taxa with an estimate.
    pub estimates: Vec<(String, f64, f64)>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub scenario: String,
    pub method: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n_defined: usize,
    pub n_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSummary {
    pub scenario: String,
    pub mean_true_effect: Option<f64>,
    pub mean_abs_bias: Option<f64>,
    pub bias_pct: Option<f64>,
    pub n_estimates: usize,
    pub n_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub summaries: Vec<MetricSummary>,
    pub bias: Vec<BiasSummary>,
    pub scores: Vec<ReplicateScore>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_else(|| "NA".into())
}

fn mean_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

impl BenchmarkReport {
    pub fn summary(&self, scenario: &str, method: &str, metric: &str) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.scenario == scenario && s.method == method && s.metric == metric)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> =
            ["scenario", "method", "metric", "mean", "stderr", "n_defined", "n_replicates"].iter().map(|s| s.to_string()).collect();
        let rows = self.summaries.iter().map(|s| {
            vec![
                s.scenario.clone(),
                s.method.clone(),
                s.metric.clone(),
                fmt_opt(s.mean),
                fmt_opt(s.stderr),
                s.n_defined.to_string(),
                s.n_replicates.to_string(),
            ]
        });
        write_table(path, &header, rows)
    }

    pub fn write_bias_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = ["scenario", "mean_true_effect", "mean_abs_bias", "bias_pct", "n_estimates", "n_replicates"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows = self.bias.iter().map(|b| {
            vec![
                b.scenario.clone(),
                fmt_opt(b.mean_true_effect),
                fmt_opt(b.mean_abs_bias),
                fmt_opt(b.bias_pct),
                b.n_estimates.to_string(),
                b.n_replicates.to_string(),
            ]
        });
        write_table(path, &header, rows)
    }

    /// One row per (scenario, method, replicate) with the confusion counts.
    /// Wall-clock times are left out so the file is reproducible.
    pub fn write_scores_csv(&self, path: &Path) -> Result<()> {
        let mut header: Vec<String> =
            ["scenario", "method", "replicate", "tp", "fp", "fn", "tn"].iter().map(|s| s.to_string()).collect();
        header.extend(Performance::NAMES.iter().map(|s| s.to_string()));
        header.push("error".to_string());
        let rows = self.scores.iter().map(|s| {
            let mut row = vec![s.scenario.clone(), s.method.clone(), s.replicate.to_string()];
            match s.confusion {
                Some(c) => row.extend([c.tp, c.fp, c.fn_, c.tn].iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n("NA".to_string(), 4)),
            }
            let values = s.performance.map(|p| p.values()).unwrap_or([None; 4]);
            row.extend(values.iter().map(|v| fmt_opt(*v)));
            row.push(s.error.clone().unwrap_or_default());
            row
        });
        write_table(path, &header, rows)
    }
}

fn score(
    scenario: &SimScenario,
    method: &dyn SelectionMethod,
    replicate: u64,
    study: &SimulatedStudy,
) -> ReplicateScore {
    let start = Instant::now();
    let result = method.run(scenario, replicate, study);
    let seconds = start.elapsed().as_secs_f64();
    let mut s = ReplicateScore {
        scenario: scenario.name.clone(),
        method: method.name().to_string(),
        replicate,
        confusion: None,
        performance: None,
        error: None,
        estimates: vec![],
        seconds,
    };
    match result {
        Ok(out) => {
            let all: Vec<String> = study.truth.iter().map(|t| t.taxon_id.clone()).collect();
            let c = confusion(&out.selected, &study.differential_ids(), &all);
            s.performance = Some(performance_metrics(&c));
            s.confusion = Some(c);
            let truth: HashMap<&str, _> = study.truth.iter().map(|t| (t.taxon_id.as_str(), t)).collect();
            s.estimates = out
                .estimates
                .into_iter()
                .filter_map(|(id, e)| {
                    let t = truth.get(id.as_str())?;
                    t.is_differential.then(|| (id.clone(), e, t.true_effect))
                })
                .collect();
        }
        Err(e) => {
            log::warn!("{} failed on {} replicate {replicate}: {e}", method.name(), scenario.name);
            s.error = Some(e.to_string());
        }
    }
    s
}

/// Runs every method on `n_replicates` datasets per scenario.
///
/// Datasets come from each scenario's own seed; analysis seeds derive from
/// `config.master_seed` and the replicate index. Method failures are
/// recorded per replicate without affecting other methods.
pub fn run_benchmark(
    scenarios: &[SimScenario],
    methods: &[Box<dyn SelectionMethod>],
    n_replicates: usize,
    config: &AnalysisConfig,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if scenarios.is_empty() {
        return Err(IfaaError::InvalidData("no scenarios to run".into()));
    }
    if methods.is_empty() {
        return Err(IfaaError::InvalidData("no methods to run".into()));
    }
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(IfaaError::InvalidData("scenario names must be unique".into()));
    }
    let designs = scenarios.iter().map(BenchmarkDesign::new).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> =
        (0..scenarios.len()).flat_map(|s| (0..n_replicates as u64).map(move |r| (s, r))).collect();
    let per_job: Vec<Vec<ReplicateScore>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let study = designs[s].replicate(r)?;
            let scores = methods.iter().map(|m| score(&scenarios[s], m.as_ref(), r, &study)).collect();
            log::info!("{} replicate {} done", scenarios[s].name, r + 1);
            Ok(scores)
        })
        .collect::<Result<_>>()?;
    let scores: Vec<ReplicateScore> = per_job.concat();

    let mut summaries = Vec::new();
    let mut bias = Vec::new();
    for scenario in scenarios {
        for method in methods {
            let mine: Vec<&ReplicateScore> =
                scores.iter().filter(|s| s.scenario == scenario.name && s.method == method.name()).collect();
            for (m, metric) in Performance::NAMES.iter().enumerate() {
                let vals: Vec<f64> = mine.iter().filter_map(|s| s.performance.and_then(|p| p.values()[m])).collect();
                let (mean, stderr) = mean_stderr(&vals);
                summaries.push(MetricSummary {
                    scenario: scenario.name.clone(),
                    method: method.name().to_string(),
                    metric: metric.to_string(),
                    mean,
                    stderr,
                    n_defined: vals.len(),
                    n_replicates: mine.len(),
                });
            }
        }
        let est: Vec<&(String, f64, f64)> = scores
            .iter()
            .filter(|s| s.scenario == scenario.name && s.method == "ifaa")
            .flat_map(|s| s.estimates.iter())
            .collect();
        if scores.iter().any(|s| s.scenario == scenario.name && s.method == "ifaa") {
            let n = est.len();
            let mean_true = (n > 0).then(|| est.iter().map(|e| e.2.abs()).sum::<f64>() / n as f64);
            let mean_bias = (n > 0).then(|| est.iter().map(|e| (e.1 - e.2).abs()).sum::<f64>() / n as f64);
            bias.push(BiasSummary {
                scenario: scenario.name.clone(),
                mean_true_effect: mean_true,
                mean_abs_bias: mean_bias,
                bias_pct: mean_true.zip(mean_bias).map(|(t, b)| 100.0 * b / t),
                n_estimates: n,
                n_replicates,
            });
        }
    }
    Ok(BenchmarkReport { summaries, bias, scores })
}

/// The built-in methods: IFAA and both Wilcoxon baselines.
pub fn default_methods(config: &AnalysisConfig) -> Vec<Box<dyn SelectionMethod>> {
    vec![Box::new(Ifaa::new(config.clone())), Box::new(Wilcoxon { relative: false }), Box::new(Wilcoxon { relative: true })]
}

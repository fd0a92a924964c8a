//! Final reference choice and association estimates with bootstrap
//! Lasso + partial ridge intervals.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::data::{write_table, ValidatedDataset};
use crate::error::{IfaaError, Result};
use crate::phase1::{is_reference_candidate, ratio_dataset, PhaseOneResult};
use crate::regression::bootstrap_lpr_ci_at_level;
use crate::regression::percentile;
use crate::rng::{derive_seed, DOMAIN_ANALYSIS};

/// Screens applied to set-B taxa before picking the final reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceCriteria {
    /// Minimum fraction of samples in which the taxon is nonzero.
    pub min_prevalence: f64,
    /// Apply `min_prevalence` within each level of every binary X column.
    pub per_group_prevalence: bool,
    /// Require a selection count at most the first tertile of set-A counts.
    pub z_tertile_cut: bool,
    /// Floor on the variance of log-abundance over nonzero observations.
    pub min_variance: f64,
}

impl Default for ReferenceCriteria {
    fn default() -> Self {
        ReferenceCriteria { min_prevalence: 0.10, per_group_prevalence: true, z_tertile_cut: true, min_variance: 1e-6 }
    }
}

impl ReferenceCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_prevalence > 0.0 && self.min_prevalence < 1.0) {
            return Err(IfaaError::config("min_prevalence", "must be in (0, 1)"));
        }
        if !(self.min_variance > 0.0) {
            return Err(IfaaError::config("min_variance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceChoice {
    pub taxon_id: String,
    /// True when no set-B taxon passed the criteria.
    pub fallback: bool,
}

fn prevalence(dataset: &ValidatedDataset, k: usize, rows: impl Iterator<Item = usize>) -> f64 {
    let (mut n, mut nz) = (0usize, 0usize);
    for i in rows {
        n += 1;
        nz += (dataset.counts.get(i, k) > 0.0) as usize;
    }
    if n == 0 {
        0.0
    } else {
        nz as f64 / n as f64
    }
}

/// Sample groups for each X column taking exactly two values.
fn binary_groups(dataset: &ValidatedDataset) -> Vec<[Vec<usize>; 2]> {
    let x = &dataset.covariates.x;
    let mut out = Vec::new();
    for j in 0..x.ncols() {
        let mut levels: Vec<f64> = x.column(j).iter().copied().collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() == 2 {
            let lo: Vec<usize> = (0..x.nrows()).filter(|&i| x[(i, j)] == levels[0]).collect();
            let hi: Vec<usize> = (0..x.nrows()).filter(|&i| x[(i, j)] == levels[1]).collect();
            out.push([lo, hi]);
        }
    }
    out
}

fn log_variance(dataset: &ValidatedDataset, k: usize) -> f64 {
    let logs: Vec<f64> =
        (0..dataset.n_samples()).map(|i| dataset.counts.get(i, k)).filter(|&v| v > 0.0).map(f64::ln).collect();
    if logs.len() < 2 {
        return 0.0;
    }
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (logs.len() - 1) as f64
}

/// Pick the final reference from set B: smallest selection count among taxa
/// passing the criteria, ties to higher prevalence and then smaller id.
pub fn choose_reference(
    dataset: &ValidatedDataset,
    result: &PhaseOneResult,
    criteria: &ReferenceCriteria,
    config: &AnalysisConfig,
) -> Result<ReferenceChoice> {
    criteria.validate()?;
    if result.set_b.is_empty() {
        return Err(IfaaError::EmptySetB("set B is empty; no independent reference is available".into()));
    }
    let min_overlap = config.effective_min_overlap(dataset.covariates.q(), dataset.covariates.s());
    let all_rows = || 0..dataset.n_samples();
    let groups = if criteria.per_group_prevalence { binary_groups(dataset) } else { vec![] };
    let mut a_counts: Vec<f64> = result.set_a.iter().filter_map(|id| result.z_of(id)).map(|z| z as f64).collect();
    a_counts.sort_by(f64::total_cmp);
    let tertile = (criteria.z_tertile_cut && !a_counts.is_empty()).then(|| percentile(&a_counts, 1.0 / 3.0));

    struct Candidate {
        id: String,
        z: usize,
        prevalence: f64,
        passes: bool,
    }
    let mut candidates = Vec::new();
    for id in &result.set_b {
        let k = dataset
            .counts
            .taxon_index(id)
            .ok_or_else(|| IfaaError::InvalidData(format!("set-B taxon '{id}' is not in the dataset")))?;
        if !is_reference_candidate(dataset, k, min_overlap) {
            continue;
        }
        let z = result.z_of(id).unwrap_or(0);
        let prev = prevalence(dataset, k, all_rows());
        let mut passes = prev >= criteria.min_prevalence;
        for [lo, hi] in &groups {
            passes &= prevalence(dataset, k, lo.iter().copied()) >= criteria.min_prevalence;
            passes &= prevalence(dataset, k, hi.iter().copied()) >= criteria.min_prevalence;
        }
        if let Some(cut) = tertile {
            passes &= z as f64 <= cut;
        }
        passes &= log_variance(dataset, k) >= criteria.min_variance;
        candidates.push(Candidate { id: id.clone(), z, prevalence: prev, passes });
    }
    let order = |a: &&Candidate, b: &&Candidate| {
        a.z.cmp(&b.z).then(b.prevalence.total_cmp(&a.prevalence)).then(a.id.cmp(&b.id))
    };
    if let Some(best) = candidates.iter().filter(|c| c.passes).min_by(order) {
        return Ok(ReferenceChoice { taxon_id: best.id.clone(), fallback: false });
    }
    let best = candidates.iter().min_by(order).ok_or_else(|| {
        IfaaError::EmptySetB(format!("no set-B taxon can serve as a reference (nonzero in at least {min_overlap} samples with varying covariates)"))
    })?;
    log::warn!("no set-B taxon passed the reference criteria; falling back to '{}'", best.id);
    Ok(ReferenceChoice { taxon_id: best.id.clone(), fallback: true })
}

/// One (taxon, covariate) estimate. Fields are `None` when the taxon could
/// not be estimated against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub taxon_id: String,
    pub covariate: String,
    pub estimate: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub fold_change: Option<f64>,
    pub n_used: usize,
    pub reference_taxon: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationEstimates {
    pub reference_taxon: String,
    pub ci_level: f64,
    pub rows: Vec<EstimateRow>,
}

const CSV_HEADER: [&str; 8] =
    ["taxon_id", "covariate", "estimate", "ci_lower", "ci_upper", "fold_change", "n_used", "reference_taxon"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_else(|| "NA".into())
}

impl AssociationEstimates {
    pub fn estimate(&self, taxon: &str, covariate: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.taxon_id == taxon && r.covariate == covariate).and_then(|r| r.estimate)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
        let rows = self.rows.iter().map(|r| {
            vec![
                r.taxon_id.clone(),
                r.covariate.clone(),
                fmt_opt(r.estimate),
                fmt_opt(r.ci_lower),
                fmt_opt(r.ci_upper),
                fmt_opt(r.fold_change),
                r.n_used.to_string(),
                r.reference_taxon.clone(),
            ]
        });
        write_table(path, &header, rows)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| IfaaError::io(path, e))
    }
}

/// Interval level after the optional Bonferroni split over `tests` intervals.
fn interval_level(config: &AnalysisConfig, tests: usize) -> f64 {
    if config.ci_bonferroni && tests > 1 {
        1.0 - (1.0 - config.ci_level) / tests as f64
    } else {
        config.ci_level
    }
}

/// Estimates for every set-A taxon against `ref_taxon`. Set-B taxa are
/// implicitly zero and not listed.
pub fn estimate_associations(
    dataset: &ValidatedDataset,
    result: &PhaseOneResult,
    ref_taxon: &str,
    config: &AnalysisConfig,
) -> Result<AssociationEstimates> {
    config.validate()?;
    let r = dataset
        .counts
        .taxon_index(ref_taxon)
        .ok_or_else(|| IfaaError::InvalidData(format!("unknown reference taxon '{ref_taxon}'")))?;
    if !result.set_b.iter().any(|t| t == ref_taxon) {
        return Err(IfaaError::InvalidData(format!("reference '{ref_taxon}' is not in set B")));
    }
    let min_overlap = config.effective_min_overlap(dataset.covariates.q(), dataset.covariates.s());
    let ratios = ratio_dataset(dataset, r, min_overlap)?;
    let x_names = &dataset.covariates.x_names;
    let q = x_names.len();
    let level = interval_level(config, result.set_a.len() * q);
    let taxa: Vec<usize> = result
        .set_a
        .iter()
        .map(|id| {
            dataset.counts.taxon_index(id).ok_or_else(|| IfaaError::InvalidData(format!("set-A taxon '{id}' is not in the dataset")))
        })
        .collect::<Result<_>>()?;

    let per_taxon: Vec<Vec<EstimateRow>> = taxa
        .par_iter()
        .map(|&k| {
            let id = &dataset.taxon_ids()[k];
            let t = &ratios.taxa[k];
            let unavailable = |note: String| {
                x_names
                    .iter()
                    .map(|c| EstimateRow {
                        taxon_id: id.clone(),
                        covariate: c.clone(),
                        estimate: None,
                        ci_lower: None,
                        ci_upper: None,
                        fold_change: None,
                        n_used: t.overlap(),
                        reference_taxon: ref_taxon.to_string(),
                        note: Some(note.clone()),
                    })
                    .collect::<Vec<_>>()
            };
            if !t.usable {
                let note = if t.overlap() < min_overlap {
                    format!("overlap {} below minimum {min_overlap}", t.overlap())
                } else {
                    "tested covariate constant over the overlap".to_string()
                };
                log::warn!("taxon '{id}': estimate unavailable: {note}");
                return Ok(unavailable(note));
            }
            let problem = ratios.regression(k, &dataset.covariates.x, &dataset.covariates.w)?;
            let seed = derive_seed(config.master_seed, DOMAIN_ANALYSIS, k as u64);
            match bootstrap_lpr_ci_at_level(&problem, config, level, seed) {
                Ok(est) => Ok((0..q)
                    .map(|j| EstimateRow {
                        taxon_id: id.clone(),
                        covariate: x_names[j].clone(),
                        estimate: Some(est.estimate[j]),
                        ci_lower: Some(est.lower[j]),
                        ci_upper: Some(est.upper[j]),
                        fold_change: Some(est.estimate[j].exp() - 1.0),
                        n_used: t.overlap(),
                        reference_taxon: ref_taxon.to_string(),
                        note: None,
                    })
                    .collect()),
                Err(IfaaError::Numerical(msg)) => {
                    log::warn!("taxon '{id}': estimate unavailable: {msg}");
                    Ok(unavailable(msg))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(AssociationEstimates { reference_taxon: ref_taxon.to_string(), ci_level: level, rows: per_taxon.concat() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub taxon_id: String,
    pub covariate: String,
    pub estimate: Option<f64>,
    /// References that produced an estimate for this row.
    pub n_references: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedEstimates {
    pub per_reference: Vec<AssociationEstimates>,
    pub averaged: Vec<AveragedRow>,
}

/// Estimates against each reference in turn and their per-row average.
pub fn averaged_estimates(
    dataset: &ValidatedDataset,
    result: &PhaseOneResult,
    refs: &[String],
    config: &AnalysisConfig,
) -> Result<AveragedEstimates> {
    if refs.is_empty() {
        return Err(IfaaError::InvalidData("at least one reference is required".into()));
    }
    let per_reference =
        refs.iter().map(|r| estimate_associations(dataset, result, r, config)).collect::<Result<Vec<_>>>()?;
    let averaged = per_reference[0]
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let vals: Vec<f64> = per_reference.iter().filter_map(|e| e.rows[i].estimate).collect();
            AveragedRow {
                taxon_id: row.taxon_id.clone(),
                covariate: row.covariate.clone(),
                estimate: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
                n_references: vals.len(),
            }
        })
        .collect();
    Ok(AveragedEstimates { per_reference, averaged })
}

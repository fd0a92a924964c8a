//! Association identification: reference cycling, selection counts,
//! permutation threshold and the split into associated (A) and
//! independent (B) taxa.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::data::{write_table, ValidatedDataset};
use crate::error::{IfaaError, Result};
use crate::regression::{fit_mcp_regression, RegressionProblem};
use crate::rng::{stream_rng, DOMAIN_PERMUTATION, DOMAIN_REFERENCES};

/// Log-ratio responses of one taxon against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonRatio {
    pub taxon: usize,
    /// Samples where both the taxon and the reference are nonzero.
    pub samples: Vec<usize>,
    pub response: Vec<f64>,
    pub usable: bool,
}

impl TaxonRatio {
    pub fn overlap(&self) -> usize {
        self.samples.len()
    }
}

/// All log-ratio regressions for one reference taxon.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioDataset {
    pub reference: usize,
    /// One entry per taxon in dataset order; the reference's own entry is
    /// empty and unusable.
    pub taxa: Vec<TaxonRatio>,
}

impl RatioDataset {
    /// Regression of taxon `k` on `[X, W]` (intercept implicit), with only
    /// the X columns penalized. `x` may be a row-permuted copy of the
    /// dataset's X.
    pub fn regression(&self, k: usize, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<RegressionProblem> {
        let t = &self.taxa[k];
        let (q, s) = (x.ncols(), w.ncols());
        let design = DMatrix::from_fn(t.samples.len(), q + s, |r, c| {
            let i = t.samples[r];
            if c < q {
                x[(i, c)]
            } else {
                w[(i, c - q)]
            }
        });
        let mut mask = vec![true; q];
        mask.resize(q + s, false);
        RegressionProblem::new(design, t.response.clone(), mask)
    }
}

fn min_overlap(dataset: &ValidatedDataset, config: &AnalysisConfig) -> usize {
    config.effective_min_overlap(dataset.covariates.q(), dataset.covariates.s())
}

fn resolve_taxon(dataset: &ValidatedDataset, id: &str) -> Result<usize> {
    dataset
        .counts
        .taxon_index(id)
        .ok_or_else(|| IfaaError::InvalidData(format!("unknown taxon '{id}'")))
}

/// Log-ratio responses `log(Y^k / Y^ref)` over the samples where both are nonzero.
pub fn build_logratio_regression(
    dataset: &ValidatedDataset,
    ref_taxon: &str,
    config: &AnalysisConfig,
) -> Result<RatioDataset> {
    let r = resolve_taxon(dataset, ref_taxon)?;
    ratio_dataset(dataset, r, min_overlap(dataset, config))
}

pub(crate) fn ratio_dataset(dataset: &ValidatedDataset, r: usize, min_overlap: usize) -> Result<RatioDataset> {
    let counts = dataset.counts.counts();
    let nz = dataset.counts.nonzero_in_taxon(r);
    if nz < min_overlap {
        return Err(IfaaError::InvalidData(format!(
            "reference '{}' has {nz} nonzero samples, fewer than the minimum overlap {min_overlap}",
            dataset.taxon_ids()[r]
        )));
    }
    let ref_rows: Vec<usize> = (0..dataset.n_samples()).filter(|&i| counts[(i, r)] > 0.0).collect();
    let taxa = (0..dataset.n_taxa())
        .map(|k| {
            if k == r {
                return TaxonRatio { taxon: k, samples: vec![], response: vec![], usable: false };
            }
            let samples: Vec<usize> = ref_rows.iter().copied().filter(|&i| counts[(i, k)] > 0.0).collect();
            let response = samples.iter().map(|&i| (counts[(i, k)] / counts[(i, r)]).ln()).collect();
            let usable = samples.len() >= min_overlap && covariates_vary(&dataset.covariates.x, &samples);
            TaxonRatio { taxon: k, samples, response, usable }
        })
        .collect();
    Ok(RatioDataset { reference: r, taxa })
}

/// True when every tested covariate takes at least two values over `rows`;
/// otherwise the ratio carries no information about X.
pub(crate) fn covariates_vary(x: &DMatrix<f64>, rows: &[usize]) -> bool {
    let Some(&first) = rows.first() else { return false };
    (0..x.ncols()).all(|j| rows.iter().any(|&i| x[(i, j)] != x[(first, j)]))
}

/// Outcome of one reference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub selected: Vec<bool>,
    pub usable: Vec<bool>,
    /// Fitted coefficient of the first X covariate (0 when unusable).
    pub first_coefficient: Vec<f64>,
}

/// MCP selection indicators for every taxon against one reference.
pub fn selection_pass(dataset: &ValidatedDataset, ref_taxon: &str, config: &AnalysisConfig) -> Result<Vec<bool>> {
    let r = resolve_taxon(dataset, ref_taxon)?;
    Ok(pass(dataset, r, &dataset.covariates.x, config)?.selected)
}

pub(crate) fn pass(dataset: &ValidatedDataset, r: usize, x: &DMatrix<f64>, config: &AnalysisConfig) -> Result<PassOutcome> {
    let ratios = ratio_dataset(dataset, r, min_overlap(dataset, config))?;
    let w = &dataset.covariates.w;
    let q = x.ncols();
    let k_all = dataset.n_taxa();
    let mut out = PassOutcome {
        selected: vec![false; k_all],
        usable: vec![false; k_all],
        first_coefficient: vec![0.0; k_all],
    };
    let usable: Vec<usize> = (0..ratios.taxa.len()).filter(|&k| ratios.taxa[k].usable).collect();
    let problems = usable.iter().map(|&k| ratios.regression(k, x, w)).collect::<Result<Vec<_>>>()?;
    for (&k, problem) in usable.iter().zip(&problems) {
        match fit_mcp_regression(problem, config.mcp_gamma, config.lambda_grid_size) {
            Ok(fit) => {
                out.usable[k] = true;
                out.selected[k] = fit.selected.iter().any(|&j| j < q);
                out.first_coefficient[k] = fit.coefficients[0];
            }
            Err(IfaaError::Numerical(msg)) => {
                log::warn!(
                    "taxon '{}' against reference '{}' skipped: {msg}",
                    dataset.taxon_ids()[k],
                    dataset.taxon_ids()[r]
                );
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Selection counts and supporting per-taxon summaries over a reference set.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Accumulated {
    pub z: Vec<usize>,
    pub usable: Vec<bool>,
    pub mean_first_coefficient: Vec<f64>,
}

pub(crate) fn accumulate(
    dataset: &ValidatedDataset,
    refs: &[usize],
    x: &DMatrix<f64>,
    config: &AnalysisConfig,
) -> Result<Accumulated> {
    let passes: Vec<PassOutcome> =
        refs.par_iter().map(|&r| pass(dataset, r, x, config)).collect::<Result<Vec<_>>>()?;
    let k_all = dataset.n_taxa();
    let mut acc = Accumulated { z: vec![0; k_all], usable: vec![false; k_all], mean_first_coefficient: vec![0.0; k_all] };
    let mut n_usable = vec![0usize; k_all];
    for p in &passes {
        for k in 0..k_all {
            acc.z[k] += p.selected[k] as usize;
            if p.usable[k] {
                acc.usable[k] = true;
                n_usable[k] += 1;
                acc.mean_first_coefficient[k] += p.first_coefficient[k];
            }
        }
    }
    for &r in refs {
        acc.usable[r] = true;
    }
    for k in 0..k_all {
        if n_usable[k] > 0 {
            acc.mean_first_coefficient[k] /= n_usable[k] as f64;
        }
    }
    Ok(acc)
}

/// `Z = sum_r Z_r` over the reference set.
pub fn accumulate_counts(dataset: &ValidatedDataset, reference_set: &[String], config: &AnalysisConfig) -> Result<Vec<usize>> {
    let refs = resolve_references(dataset, reference_set)?;
    Ok(accumulate(dataset, &refs, &dataset.covariates.x, config)?.z)
}

fn resolve_references(dataset: &ValidatedDataset, reference_set: &[String]) -> Result<Vec<usize>> {
    let refs = reference_set.iter().map(|id| resolve_taxon(dataset, id)).collect::<Result<Vec<_>>>()?;
    let mut sorted = refs.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != refs.len() {
        return Err(IfaaError::InvalidData("reference set lists a taxon twice".into()));
    }
    Ok(refs)
}

/// Expected selection counts `(k_a, k_b, k_a - k_b)` for a set-A and a set-B
/// taxon when `R` of `K + 1` taxa serve as references and `m_a` are associated.
pub fn expected_counts(k: usize, r: usize, m_a: usize) -> Result<(f64, f64, f64)> {
    let total = k + 1;
    if r < 2 || r > total {
        return Err(IfaaError::config("r_refs", format!("{r} references for {total} taxa; need 2 <= R <= K+1")));
    }
    if m_a > total || total - m_a < 2 {
        return Err(IfaaError::InvalidData(
            "at least two independent taxa are needed to separate the sets".into(),
        ));
    }
    let (kf, rf, tf) = (k as f64, r as f64, total as f64);
    let k_a = kf * rf / tf;
    let k_b = rf * m_a as f64 / tf;
    let mean_diff = (total - m_a - 1) as f64 * rf / tf;
    Ok((k_a, k_b, mean_diff))
}

/// The `ceil((1 - alpha) * P)`-th smallest value (nearest-rank percentile).
pub fn nearest_rank_threshold(values: &[usize], alpha: f64) -> usize {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let p = sorted.len();
    // the small slack keeps e.g. 0.8 * 10 from rounding up to rank 9
    let rank = ((1.0 - alpha) * p as f64 - 1e-9).ceil().clamp(1.0, p as f64) as usize;
    sorted[rank - 1]
}

/// Permutation maxima `C_p^m` and the threshold `C^alpha`.
pub fn permutation_threshold(
    dataset: &ValidatedDataset,
    reference_set: &[String],
    config: &AnalysisConfig,
) -> Result<(Vec<usize>, usize)> {
    let refs = resolve_references(dataset, reference_set)?;
    let maxima = permutation_maxima(dataset, &refs, config)?;
    let threshold = nearest_rank_threshold(&maxima, config.alpha);
    Ok((maxima, threshold))
}

pub(crate) fn permute_rows(x: &DMatrix<f64>, seed: u64, index: u64) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(&mut stream_rng(seed, DOMAIN_PERMUTATION, index));
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(order[i], j)])
}

fn permutation_maxima(dataset: &ValidatedDataset, refs: &[usize], config: &AnalysisConfig) -> Result<Vec<usize>> {
    if config.n_perms == 0 {
        return Err(IfaaError::config("n_perms", "need at least one permutation"));
    }
    (0..config.n_perms as u64)
        .into_par_iter()
        .map(|p| {
            let x = permute_rows(&dataset.covariates.x, config.master_seed, p);
            let acc = accumulate(dataset, refs, &x, config)?;
            log::debug!("permutation {} of {} done", p + 1, config.n_perms);
            Ok((0..acc.z.len()).filter(|&k| acc.usable[k]).map(|k| acc.z[k]).max().unwrap_or(0))
        })
        .collect()
}

/// Split usable taxa at the threshold; errors when no independent taxon remains.
pub fn identify_sets(z: &[usize], threshold: usize, usable: &[bool]) -> Result<(Vec<usize>, Vec<usize>)> {
    let (a, b) = partition(z, threshold, usable);
    if b.is_empty() {
        return Err(IfaaError::EmptySetB(format!(
            "every usable taxon reached the threshold {threshold}; increase alpha or check that the data contain independent taxa"
        )));
    }
    Ok((a, b))
}

fn partition(z: &[usize], threshold: usize, usable: &[bool]) -> (Vec<usize>, Vec<usize>) {
    (0..z.len()).filter(|&k| usable[k]).partition(|&k| z[k] >= threshold)
}

/// Reference candidates: taxa nonzero in at least `min_overlap` samples over
/// which every tested covariate varies.
pub(crate) fn reference_candidates(dataset: &ValidatedDataset, config: &AnalysisConfig) -> Vec<usize> {
    let m = min_overlap(dataset, config);
    (0..dataset.n_taxa()).filter(|&k| is_reference_candidate(dataset, k, m)).collect()
}

pub(crate) fn is_reference_candidate(dataset: &ValidatedDataset, k: usize, min_overlap: usize) -> bool {
    let counts = dataset.counts.counts();
    let rows: Vec<usize> = (0..dataset.n_samples()).filter(|&i| counts[(i, k)] > 0.0).collect();
    rows.len() >= min_overlap && covariates_vary(&dataset.covariates.x, &rows)
}

/// `R` distinct reference taxa drawn uniformly from the candidates, in dataset order.
pub fn sample_reference_set(dataset: &ValidatedDataset, config: &AnalysisConfig) -> Result<Vec<String>> {
    let candidates = reference_candidates(dataset, config);
    if candidates.len() < 2 {
        return Err(IfaaError::InvalidData(format!(
            "only {} taxa are nonzero in at least {} samples with varying tested covariates; at least 2 are needed",
            candidates.len(),
            min_overlap(dataset, config)
        )));
    }
    let r = if config.r_refs > candidates.len() {
        log::warn!("only {} usable reference candidates; using all of them instead of {}", candidates.len(), config.r_refs);
        candidates.len()
    } else {
        config.r_refs
    };
    let mut rng = stream_rng(config.master_seed, DOMAIN_REFERENCES, 0);
    let mut picked: Vec<usize> = candidates.choose_multiple(&mut rng, r).copied().collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| dataset.taxon_ids()[k].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneResult {
    pub taxon_ids: Vec<String>,
    pub reference_set: Vec<String>,
    /// Selection counts in `taxon_ids` order.
    pub z_counts: Vec<usize>,
    pub perm_maxima: Vec<usize>,
    pub threshold: usize,
    pub alpha: f64,
    pub set_a: Vec<String>,
    pub set_b: Vec<String>,
    pub unusable: Vec<String>,
    /// Average fitted coefficient of the first X covariate across passes.
    pub mean_coefficient: Vec<f64>,
}

impl PhaseOneResult {
    pub fn z_of(&self, id: &str) -> Option<usize> {
        self.taxon_ids.iter().position(|t| t == id).map(|k| self.z_counts[k])
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| IfaaError::io(path, e))
    }

    /// Signed selection counts per taxon and sample for taxa with
    /// `z >= floor`; zero where the taxon is absent from the sample.
    pub fn write_heatmap(&self, dataset: &ValidatedDataset, floor: usize, path: &Path) -> Result<()> {
        let mut header = vec!["taxon_id".to_string()];
        header.extend(dataset.counts.sample_ids().iter().cloned());
        let rows = (0..self.taxon_ids.len()).filter(|&k| self.z_counts[k] >= floor.max(1)).map(|k| {
            let k_data = dataset.counts.taxon_index(&self.taxon_ids[k]).expect("same dataset");
            let sign = if self.mean_coefficient[k] < 0.0 { -1i64 } else { 1 };
            let mut row = vec![self.taxon_ids[k].clone()];
            for i in 0..dataset.n_samples() {
                let v = if dataset.counts.get(i, k_data) > 0.0 { sign * self.z_counts[k] as i64 } else { 0 };
                row.push(v.to_string());
            }
            row
        });
        write_table(path, &header, rows)
    }
}

/// Reference sampling, selection counts, permutation threshold and set split.
/// An empty set B is not an error here; callers decide how to proceed.
pub fn run_phase_one(dataset: &ValidatedDataset, config: &AnalysisConfig) -> Result<PhaseOneResult> {
    config.validate()?;
    let reference_set = sample_reference_set(dataset, config)?;
    let refs = resolve_references(dataset, &reference_set)?;
    log::info!("phase 1: {} references, {} permutations", refs.len(), config.n_perms);
    let acc = accumulate(dataset, &refs, &dataset.covariates.x, config)?;
    let perm_maxima = permutation_maxima(dataset, &refs, config)?;
    let threshold = nearest_rank_threshold(&perm_maxima, config.alpha);
    let (a, b) = partition(&acc.z, threshold, &acc.usable);
    let ids = dataset.taxon_ids();
    let pick = |v: &[usize]| v.iter().map(|&k| ids[k].clone()).collect::<Vec<_>>();
    let unusable: Vec<usize> = (0..ids.len()).filter(|&k| !acc.usable[k]).collect();
    Ok(PhaseOneResult {
        taxon_ids: ids.to_vec(),
        reference_set,
        z_counts: acc.z,
        perm_maxima,
        threshold,
        alpha: config.alpha,
        set_a: pick(&a),
        set_b: pick(&b),
        unusable: pick(&unusable),
        mean_coefficient: acc.mean_first_coefficient,
    })
}

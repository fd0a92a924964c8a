//! Generative simulators.
//!
//! Two generators live here. [`sample_ziln`] draws from the multivariate
//! zero-inflated log-normal model: a presence pattern is drawn first, then
//! log-abundances of the present taxa from the matching sub-mean and
//! sub-covariance. [`BenchmarkDesign`] reproduces the two-group Poisson-gamma
//! benchmark with group-specific sampling fractions, where the observed count
//! is `floor(c * true_count)`.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{write_table, CountMatrix, CovariateTable};
use crate::error::{IfaaError, Result};
use crate::rng::{stream_rng, DOMAIN_REPLICATE, DOMAIN_SCENARIO};

/// Discrete part of the zero-inflated model.
#[derive(Debug, Clone, PartialEq)]
pub enum PresenceModel {
    /// Explicit masses on nonempty subsets of taxa (0-based indices); only
    /// subsets with positive mass need to be listed.
    Subsets(Vec<(Vec<usize>, f64)>),
    /// Each taxon present independently with its own probability,
    /// conditioned on at least one taxon being present.
    Independent(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZilnParams {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub presence: PresenceModel,
    /// Standard deviation of a subject-level normal shift added to every
    /// present taxon's log-abundance.
    pub random_intercept_sd: f64,
}

const MASS_TOL: f64 = 1e-9;

impl ZilnParams {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>, presence: PresenceModel, random_intercept_sd: f64) -> Result<Self> {
        let k = mu.len();
        if k == 0 {
            return Err(IfaaError::config("mu", "needs at least one taxon"));
        }
        if sigma.shape() != (k, k) {
            return Err(IfaaError::config("sigma", format!("must be {k}x{k}")));
        }
        let scale = sigma.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            if sigma[(i, i)] < 0.0 {
                return Err(IfaaError::config("sigma", "negative variance on the diagonal"));
            }
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(IfaaError::config("sigma", "must be symmetric"));
                }
            }
        }
        if !(random_intercept_sd >= 0.0) {
            return Err(IfaaError::config("random_intercept_sd", "must be nonnegative"));
        }
        match &presence {
            PresenceModel::Subsets(masses) => {
                let mut total = 0.0;
                for (subset, p) in masses {
                    if subset.is_empty() {
                        return Err(IfaaError::config("presence_masses", "the empty subset cannot carry mass"));
                    }
                    if subset.iter().any(|&t| t >= k) {
                        return Err(IfaaError::config("presence_masses", "subset index out of range"));
                    }
                    let mut s = subset.clone();
                    s.sort_unstable();
                    s.dedup();
                    if s.len() != subset.len() {
                        return Err(IfaaError::config("presence_masses", "subset lists a taxon twice"));
                    }
                    if !(*p >= 0.0) {
                        return Err(IfaaError::config("presence_masses", "masses must be nonnegative"));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(IfaaError::config("presence_masses", format!("masses sum to {total}, not 1")));
                }
            }
            PresenceModel::Independent(probs) => {
                if probs.len() != k || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(IfaaError::config("presence_probs", "need one probability in [0,1] per taxon"));
                }
                if probs.iter().all(|&p| p == 0.0) {
                    return Err(IfaaError::config("presence_probs", "all mass would fall on the empty subset"));
                }
            }
        }
        Ok(ZilnParams { mu, sigma, presence, random_intercept_sd })
    }

    /// All taxa always present: the plain multivariate log-normal.
    pub fn log_normal(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let all = (0..mu.len()).collect();
        Self::new(mu, sigma, PresenceModel::Subsets(vec![(all, 1.0)]), 0.0)
    }

    pub fn n_taxa(&self) -> usize {
        self.mu.len()
    }

    fn draw_subset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match &self.presence {
            PresenceModel::Subsets(masses) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (subset, p) in masses {
                    acc += p;
                    if u < acc {
                        return sorted(subset);
                    }
                }
                // rounding slack: last subset with positive mass
                let (subset, _) = masses.iter().rev().find(|(_, p)| *p > 0.0).expect("validated");
                sorted(subset)
            }
            PresenceModel::Independent(probs) => loop {
                let s: Vec<usize> = (0..probs.len()).filter(|&t| rng.random::<f64>() < probs[t]).collect();
                if !s.is_empty() {
                    return s;
                }
            },
        }
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

/// `F` with `F F^T = S` for a PSD matrix, via the symmetric eigendecomposition.
fn psd_factor(s: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let eig = SymmetricEigen::new(s);
    let mut f = eig.eigenvectors;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -1e-10 * scale {
            return Err(IfaaError::Numerical(format!(
                "covariance submatrix is not positive semidefinite (eigenvalue {lam})"
            )));
        }
        let r = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(r);
    }
    Ok(f)
}

/// Draw `n` subjects from the zero-inflated log-normal model.
///
/// Per subject: presence subset, then one standard normal per present taxon,
/// then one shared normal `u` (always drawn so that streams stay aligned when
/// `random_intercept_sd` is zero). Absent taxa are exactly zero.
pub fn sample_ziln<R: Rng + ?Sized>(params: &ZilnParams, n: usize, rng: &mut R) -> Result<CountMatrix> {
    if n == 0 {
        return Err(IfaaError::config("n", "must be at least 1"));
    }
    let k = params.n_taxa();
    let mut factors: HashMap<Vec<usize>, DMatrix<f64>> = HashMap::new();
    let mut counts = DMatrix::zeros(n, k);
    for i in 0..n {
        let subset = params.draw_subset(rng);
        if !factors.contains_key(&subset) {
            let sub = DMatrix::from_fn(subset.len(), subset.len(), |a, b| params.sigma[(subset[a], subset[b])]);
            factors.insert(subset.clone(), psd_factor(sub)?);
        }
        let f = &factors[&subset];
        let z = DVector::from_iterator(subset.len(), (0..subset.len()).map(|_| StandardNormal.sample(rng)));
        let u: f64 = StandardNormal.sample(rng);
        let shift = params.random_intercept_sd * u;
        let draw = f * z;
        for (a, &t) in subset.iter().enumerate() {
            counts[(i, t)] = (params.mu[t] + draw[a] + shift).exp();
        }
    }
    let samples = (1..=n).map(|i| format!("s{i}")).collect();
    let taxa = (1..=k).map(|t| format!("t{t}")).collect();
    CountMatrix::new(samples, taxa, counts)
}

/// One benchmark scenario: group-level sampling fractions and the
/// Poisson-gamma abundance design. Deserializes from a flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    #[serde(default)]
    pub name: String,
    pub n_subjects: usize,
    pub n_taxa: usize,
    pub frac_differential: f64,
    /// Fractions of (high, medium, low) abundance taxa.
    pub abundance_mix: [f64; 3],
    /// Gamma shapes for (low, medium, high) abundance taxa.
    pub gamma_shapes: [f64; 3],
    /// Uniform ranges of the group shift for (low, medium, high) differences.
    pub diff_ranges: [[f64; 2]; 3],
    /// Fractions of (low, medium, high) differences among differential taxa.
    pub diff_mix: [f64; 3],
    /// Sampling fraction for group X = 0.
    pub c1: f64,
    /// Sampling fraction for group X = 1.
    pub c2: f64,
    pub seed: u64,
}

/// Sampling-fraction pairs (C1, C2) of the five confounding scenarios.
pub const CONFOUNDING_SCENARIOS: [(f64, f64); 5] =
    [(1.0 / 30.0, 1.0 / 30.0), (1.0 / 30.0, 1.0 / 90.0), (1.0 / 18.0, 1.0 / 90.0), (1.0 / 9.0, 1.0 / 90.0), (1.0 / 6.0, 1.0 / 90.0)];

impl SimScenario {
    /// Confounding scenario `index` (1..=5) with the published abundance design.
    pub fn confounded(index: usize, n_subjects: usize, n_taxa: usize, seed: u64) -> Result<Self> {
        let Some(&(c1, c2)) = index.checked_sub(1).and_then(|i| CONFOUNDING_SCENARIOS.get(i)) else {
            return Err(IfaaError::config("scenario", format!("{index} is not in 1..=5")));
        };
        let s = SimScenario {
            name: format!("scenario{index}"),
            n_subjects,
            n_taxa,
            frac_differential: 0.25,
            abundance_mix: [0.10, 0.30, 0.60],
            gamma_shapes: [50.0, 200.0, 10000.0],
            diff_ranges: [[100.0, 150.0], [200.0, 400.0], [10000.0, 15000.0]],
            diff_mix: [0.60, 0.30, 0.10],
            c1,
            c2,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, c) in [("c1", self.c1), ("c2", self.c2)] {
            if !(c > 0.0 && c <= 1.0) {
                return Err(IfaaError::config(field, format!("{c} is not in (0, 1]")));
            }
        }
        if self.n_subjects < 2 {
            return Err(IfaaError::config("n_subjects", "need at least 2 subjects"));
        }
        if self.n_taxa < 2 {
            return Err(IfaaError::config("n_taxa", "need at least 2 taxa"));
        }
        if !(0.0..=1.0).contains(&self.frac_differential) {
            return Err(IfaaError::config("frac_differential", "must be in [0, 1]"));
        }
        for (field, mix) in [("abundance_mix", self.abundance_mix), ("diff_mix", self.diff_mix)] {
            if mix.iter().any(|f| !(*f >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(IfaaError::config(field, "fractions must be nonnegative and sum to 1"));
            }
        }
        if self.gamma_shapes.iter().any(|a| !(*a > 0.0)) {
            return Err(IfaaError::config("gamma_shapes", "shapes must be positive"));
        }
        if self.diff_ranges.iter().any(|[lo, hi]| !(*lo >= 0.0 && lo < hi)) {
            return Err(IfaaError::config("diff_ranges", "each range needs 0 <= u1 < u2"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: SimScenario = toml::from_str(text).map_err(|e| IfaaError::Serialization(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IfaaError::io(path, e))?;
        let mut s = Self::from_toml_str(&text)?;
        if s.name.is_empty() {
            s.name = path.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    /// Ratio of sampling fractions C1 / C2.
    pub fn confounding_ratio(&self) -> f64 {
        self.c1 / self.c2
    }
}

/// Split `total` items by `fractions` with largest-remainder rounding
/// (earlier classes win ties).
pub fn split_counts(total: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut out: Vec<usize> = raw.iter().map(|r| (r + 1e-9).floor() as usize).collect();
    let mut left = total.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - out[b] as f64).total_cmp(&(raw[a] - out[a] as f64)).then(a.cmp(&b)));
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[c] += 1;
        left -= 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

/// Fixed per-taxon parameters of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonDesign {
    pub taxon_id: String,
    pub abundance: Level,
    /// Poisson mean in group X = 0.
    pub lambda: f64,
    /// Added Poisson mean in group X = 1 (zero for null taxa).
    pub shift: f64,
    pub difference: Option<Level>,
}

/// Scenario parameters drawn once from the scenario seed and reused for every
/// replicate dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDesign {
    pub scenario: SimScenario,
    pub taxa: Vec<TaxonDesign>,
}

impl BenchmarkDesign {
    pub fn new(scenario: &SimScenario) -> Result<Self> {
        scenario.validate()?;
        let mut rng = stream_rng(scenario.seed, DOMAIN_SCENARIO, 0);
        let k = scenario.n_taxa;

        // abundance classes: abundance_mix is ordered (high, med, low)
        let [n_high, n_med, _] = split_counts(k, &scenario.abundance_mix)[..] else { unreachable!() };
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut abundance = vec![Level::Low; k];
        for (pos, &t) in order.iter().enumerate() {
            abundance[t] = if pos < n_high {
                Level::High
            } else if pos < n_high + n_med {
                Level::Medium
            } else {
                Level::Low
            };
        }
        let shape = |l: Level| match l {
            Level::Low => scenario.gamma_shapes[0],
            Level::Medium => scenario.gamma_shapes[1],
            Level::High => scenario.gamma_shapes[2],
        };
        let mut lambda = Vec::with_capacity(k);
        for &a in &abundance {
            let g = Gamma::new(shape(a), 1.0).map_err(|e| IfaaError::config("gamma_shapes", e.to_string()))?;
            lambda.push(g.sample(&mut rng));
        }

        // differential taxa and their shift class, independent of abundance class
        let n_diff = (scenario.frac_differential * k as f64).round() as usize;
        let mut diff_taxa = rand::seq::index::sample(&mut rng, k, n_diff).into_vec();
        diff_taxa.sort_unstable();
        let [d_low, d_med, _] = split_counts(n_diff, &scenario.diff_mix)[..] else { unreachable!() };
        let mut classes: Vec<Level> = (0..n_diff)
            .map(|pos| if pos < d_low { Level::Low } else if pos < d_low + d_med { Level::Medium } else { Level::High })
            .collect();
        classes.shuffle(&mut rng);
        let mut shift = vec![0.0; k];
        let mut difference = vec![None; k];
        for (&t, &c) in diff_taxa.iter().zip(&classes) {
            let [lo, hi] = match c {
                Level::Low => scenario.diff_ranges[0],
                Level::Medium => scenario.diff_ranges[1],
                Level::High => scenario.diff_ranges[2],
            };
            let u = Uniform::new(lo, hi).map_err(|e| IfaaError::config("diff_ranges", e.to_string()))?;
            shift[t] = u.sample(&mut rng);
            difference[t] = Some(c);
        }
        let taxa = (0..k)
            .map(|t| TaxonDesign {
                taxon_id: format!("taxon{:0w$}", t + 1, w = digits(k)),
                abundance: abundance[t],
                lambda: lambda[t],
                shift: shift[t],
                difference: difference[t],
            })
            .collect();
        Ok(BenchmarkDesign { scenario: scenario.clone(), taxa })
    }

    /// Replicate dataset `replicate`, drawn from its own counter stream.
    pub fn replicate(&self, replicate: u64) -> Result<SimulatedStudy> {
        self.generate(&mut stream_rng(self.scenario.seed, DOMAIN_REPLICATE, replicate))
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimulatedStudy> {
        let n = self.scenario.n_subjects;
        let k = self.taxa.len();
        let group: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let mut truth_counts = DMatrix::zeros(n, k);
        for i in 0..n {
            for (t, td) in self.taxa.iter().enumerate() {
                let mean = if group[i] == 1.0 { td.lambda + td.shift } else { td.lambda };
                let pois = Poisson::new(mean).map_err(|e| IfaaError::Numerical(e.to_string()))?;
                truth_counts[(i, t)] = pois.sample(rng);
            }
        }
        let samples: Vec<String> = (1..=n).map(|i| format!("subject{:0w$}", i, w = digits(n))).collect();
        let taxa: Vec<String> = self.taxa.iter().map(|t| t.taxon_id.clone()).collect();
        let true_counts = CountMatrix::new(samples.clone(), taxa, truth_counts)?;
        let fraction: Vec<f64> =
            group.iter().map(|&g| if g == 1.0 { self.scenario.c2 } else { self.scenario.c1 }).collect();
        let observed_counts = apply_sampling_fraction(&true_counts, &fraction)?;
        let covariates = CovariateTable::new(
            samples,
            vec!["group".into()],
            DMatrix::from_column_slice(n, 1, &group),
            vec![],
            DMatrix::zeros(n, 0),
        )?;
        let effects = self.taxa.iter().map(|t| true_effect(t.lambda, t.shift)).collect::<Vec<_>>();
        let truth = self
            .taxa
            .iter()
            .zip(effects)
            .map(|(t, e)| TaxonTruth {
                taxon_id: t.taxon_id.clone(),
                is_differential: t.shift > 0.0,
                lambda: t.lambda,
                shift: t.shift,
                true_effect: e,
            })
            .collect();
        Ok(SimulatedStudy { true_counts, observed_counts, covariates, sampling_fraction: fraction, truth })
    }
}

fn digits(n: usize) -> usize {
    n.to_string().len()
}

/// Draw the scenario parameters and one dataset from `rng`.
pub fn generate_benchmark<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<SimulatedStudy> {
    BenchmarkDesign::new(scenario)?.generate(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonTruth {
    pub taxon_id: String,
    pub is_differential: bool,
    pub lambda: f64,
    pub shift: f64,
    pub true_effect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStudy {
    pub true_counts: CountMatrix,
    pub observed_counts: CountMatrix,
    pub covariates: CovariateTable,
    pub sampling_fraction: Vec<f64>,
    pub truth: Vec<TaxonTruth>,
}

impl SimulatedStudy {
    pub fn differential_ids(&self) -> Vec<String> {
        self.truth.iter().filter(|t| t.is_differential).map(|t| t.taxon_id.clone()).collect()
    }

    /// Writes `counts.csv`, `covariates.csv` and `truth.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        self.observed_counts.write_csv(&dir.join("counts.csv"))?;
        self.covariates.write_csv(&dir.join("covariates.csv"))?;
        let header: Vec<String> = ["taxon_id", "is_differential", "true_effect"].iter().map(|s| s.to_string()).collect();
        let rows = self.truth.iter().map(|t| {
            vec![t.taxon_id.clone(), (t.is_differential as u8).to_string(), format!("{}", t.true_effect)]
        });
        write_table(&dir.join("truth.csv"), &header, rows)?;
        Ok(vec!["counts.csv".into(), "covariates.csv".into(), "truth.csv".into()])
    }
}

/// `floor(c_i * y_ik)` for every entry.
pub fn apply_sampling_fraction(true_counts: &CountMatrix, c: &[f64]) -> Result<CountMatrix> {
    if c.len() != true_counts.n_samples() {
        return Err(IfaaError::InvalidData("one sampling fraction per sample is required".into()));
    }
    if let Some(bad) = c.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(IfaaError::config("c", format!("sampling fraction {bad} is not in (0, 1]")));
    }
    let m = true_counts.counts();
    let observed = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (c[i] * m[(i, j)]).floor());
    CountMatrix::new(true_counts.sample_ids().to_vec(), true_counts.taxon_ids().to_vec(), observed)
}

/// `E[log Y | Y > 0]` for `Y ~ Poisson(lambda)`, by direct series summation
/// outward from the mode.
pub fn truncated_poisson_log_mean(lambda: f64) -> f64 {
    assert!(lambda > 0.0, "Poisson mean must be positive");
    let mode = lambda.floor().max(1.0);
    let p_mode = (mode * lambda.ln() - lambda - ln_gamma(mode + 1.0)).exp();
    let cutoff = p_mode * 1e-20;
    let mut mass = p_mode;
    let mut weighted = p_mode * mode.ln();
    let mut p = p_mode;
    let mut y = mode;
    while y > 1.0 {
        p *= y / lambda;
        y -= 1.0;
        mass += p;
        weighted += p * y.ln();
        if p < cutoff {
            break;
        }
    }
    p = p_mode;
    y = mode;
    loop {
        y += 1.0;
        p *= lambda / y;
        mass += p;
        weighted += p * y.ln();
        if p < cutoff && y > lambda {
            break;
        }
    }
    weighted / mass
}

/// Conditional log-mean difference between group X = 1 (`lambda + shift`) and X = 0.
pub fn true_effect(lambda: f64, shift: f64) -> f64 {
    if shift == 0.0 {
        return 0.0;
    }
    truncated_poisson_log_mean(lambda + shift) - truncated_poisson_log_mean(lambda)
}

pub fn true_effects(study: &SimulatedStudy) -> Vec<f64> {
    study.truth.iter().map(|t| true_effect(t.lambda, t.shift)).collect()
}

/// Lower and upper bounds on `var(C Y)` for independent `C` and `Y`.
pub fn dispersion_envelope(c_var: f64, c_sq_mean: f64, y_true_var: f64, y_true_mean: f64) -> Result<(f64, f64)> {
    if !(c_var >= 0.0) || !(y_true_var >= 0.0) {
        return Err(IfaaError::InvalidData("variances must be nonnegative".into()));
    }
    if !(c_sq_mean >= c_var) {
        return Err(IfaaError::InvalidData("E[C^2] cannot be below var(C)".into()));
    }
    let second_moment = y_true_var + y_true_mean * y_true_mean;
    Ok((c_var * second_moment, c_sq_mean * second_moment))
}

use rand::Rng;
use rayon::prelude::*;

use super::cd::fit_prepared_at;
use super::prepare::Prepared;
use super::ridge::partial_ridge_rows;
use super::select::fit_lasso;
use super::{EstimateWithCI, Penalty, RegressionProblem};
use crate::config::AnalysisConfig;
use crate::error::{IfaaError, Result};
use crate::rng::{derive_seed, stream_rng, DOMAIN_BOOTSTRAP, DOMAIN_CV_FOLDS};

/// Largest tolerated fraction of skipped bootstrap replicates.
const MAX_SKIPPED_FRACTION: f64 = 0.2;

/// Linear-interpolation sample quantile (R type 7) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap Lasso + partial ridge.
///
/// The Lasso penalty is chosen once by cross-validation on the full data;
/// each paired resample reselects the support at that penalty and refits with
/// a `1/n` ridge on the off-support columns. Intervals are percentile
/// intervals of the replicate coefficients.
pub fn bootstrap_lpr_ci(problem: &RegressionProblem, config: &AnalysisConfig, seed: u64) -> Result<EstimateWithCI> {
    bootstrap_lpr_ci_at_level(problem, config, config.ci_level, seed)
}

pub(crate) fn bootstrap_lpr_ci_at_level(
    problem: &RegressionProblem,
    config: &AnalysisConfig,
    level: f64,
    seed: u64,
) -> Result<EstimateWithCI> {
    let n = problem.n();
    let p = problem.p();
    let ridge = 1.0 / n as f64;
    let lasso = fit_lasso(problem, config.lambda_grid_size, config.cv_folds, derive_seed(seed, DOMAIN_CV_FOLDS, 0))?;
    let lambda = lasso.lambda;
    let point = partial_ridge_rows(problem, &problem.all_rows(), &lasso.selected, ridge)?;

    let reps: Vec<Option<Vec<f64>>> = (0..config.bootstrap_reps as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, DOMAIN_BOOTSTRAP, b);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let first = problem.response[rows[0]];
            if rows.iter().all(|&i| problem.response[i] == first) {
                log::debug!("bootstrap replicate {b}: constant response, skipped");
                return None;
            }
            let fit = Prepared::new(problem, &rows).map(|prep| fit_prepared_at(&prep, Penalty::Lasso, lambda));
            match fit.and_then(|f| partial_ridge_rows(problem, &rows, &f.selected, ridge)) {
                Ok(r) => Some(r.coefficients),
                Err(e) => {
                    log::debug!("bootstrap replicate {b} skipped: {e}");
                    None
                }
            }
        })
        .collect();

    let used: Vec<Vec<f64>> = reps.into_iter().flatten().collect();
    let skipped = config.bootstrap_reps - used.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * config.bootstrap_reps as f64 || used.is_empty() {
        return Err(IfaaError::Numerical(format!(
            "{skipped} of {} bootstrap replicates were degenerate",
            config.bootstrap_reps
        )));
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} bootstrap replicates skipped", config.bootstrap_reps);
    }
    let a = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(p);
    let mut upper = Vec::with_capacity(p);
    for j in 0..p {
        let mut col: Vec<f64> = used.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(percentile(&col, a));
        upper.push(percentile(&col, 1.0 - a));
    }
    Ok(EstimateWithCI {
        estimate: point.coefficients,
        lower,
        upper,
        level,
        replicates_used: used.len(),
        replicates_skipped: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn percentile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert!((percentile(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    fn cfg(b: usize) -> AnalysisConfig {
        AnalysisConfig { bootstrap_reps: b, lambda_grid_size: 30, ..Default::default() }
    }

    #[test]
    fn zero_noise_gives_degenerate_interval_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 60;
        let x = DMatrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let beta = [1.5, -2.0, 0.8];
        let y: Vec<f64> = (0..n).map(|i| 0.3 + (0..3).map(|j| beta[j] * x[(i, j)]).sum::<f64>()).collect();
        let problem = RegressionProblem::new(x, y, vec![true; 3]).unwrap();
        let est = bootstrap_lpr_ci(&problem, &cfg(50), 3).unwrap();
        for j in 0..3 {
            assert!((est.estimate[j] - beta[j]).abs() < 1e-9);
            assert!((est.lower[j] - beta[j]).abs() < 1e-9);
            assert!((est.upper[j] - beta[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn negating_a_column_mirrors_its_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 80;
        let x = DMatrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] + 0.4 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let mut xneg = x.clone();
        xneg.column_mut(0).neg_mut();
        let a = bootstrap_lpr_ci(&RegressionProblem::new(x, y.clone(), vec![true; 3]).unwrap(), &cfg(100), 8).unwrap();
        let b = bootstrap_lpr_ci(&RegressionProblem::new(xneg, y, vec![true; 3]).unwrap(), &cfg(100), 8).unwrap();
        assert!((a.estimate[0] + b.estimate[0]).abs() < 1e-9);
        assert!((a.lower[0] + b.upper[0]).abs() < 1e-9);
        assert!((a.upper[0] + b.lower[0]).abs() < 1e-9);
        assert!((a.estimate[2] - b.estimate[2]).abs() < 1e-9);
    }

    #[test]
    fn too_many_degenerate_replicates_is_error() {
        // two distinct responses out of 12: most resamples keep both, so force
        // degeneracy with a single non-constant observation
        let n = 12;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let mut y = vec![0.0; n];
        y[0] = 1.0;
        let problem = RegressionProblem::new(x, y, vec![true]).unwrap();
        assert!(bootstrap_lpr_ci(&problem, &cfg(200), 1).is_err());
    }

    #[test]
    fn lower_never_exceeds_upper() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 40;
        let x = DMatrix::from_fn(n, 4, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let est = bootstrap_lpr_ci(&RegressionProblem::new(x, y, vec![true; 4]).unwrap(), &cfg(60), 2).unwrap();
        for j in 0..4 {
            assert!(est.lower[j] <= est.upper[j]);
        }
    }
}

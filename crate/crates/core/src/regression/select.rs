use rand::seq::SliceRandom;

use super::cd::{check_penalty, snap_zeros, solve, to_sparse_fit};
use super::prepare::Prepared;
use super::{Penalty, RegressionProblem, SparseFit};
use crate::error::{IfaaError, Result};
use crate::rng::{stream_rng, DOMAIN_CV_FOLDS};

/// Signals whose lambda_max is below this fraction of max|y| are rounding
/// noise (e.g. a log-ratio of two proportional columns) and select nothing.
const NO_SIGNAL_REL: f64 = 1e-10;
/// Smallest grid value relative to lambda_max.
const LAMBDA_MIN_RATIO: f64 = 0.01;

/// `size` values log-spaced from `lambda_max` down to `0.01 * lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize) -> Vec<f64> {
    if size <= 1 {
        return vec![lambda_max];
    }
    let ratio = LAMBDA_MIN_RATIO.ln() / (size - 1) as f64;
    (0..size).map(|k| lambda_max * (ratio * k as f64).exp()).collect()
}

struct Start {
    beta: Vec<f64>,
    resid: Vec<f64>,
    lambda_max: f64,
}

/// Unpenalized least-squares fit with every penalized coefficient at zero.
fn null_start(prep: &Prepared) -> Start {
    let mut beta = vec![0.0; prep.p];
    let mut resid = prep.y.clone();
    prep.unpenalized_step(&mut beta, &mut resid);
    let nf = prep.n as f64;
    let lambda_max = prep
        .penalized_active()
        .map(|j| (prep.dot(j, &resid) / nf).abs())
        .fold(0.0, f64::max);
    Start { beta, resid, lambda_max }
}

fn has_signal(prep: &Prepared, lambda_max: f64) -> bool {
    lambda_max > NO_SIGNAL_REL * prep.max_abs_y
}

struct PathPoint {
    beta: Vec<f64>,
    resid: Vec<f64>,
}

fn run_path(prep: &Prepared, penalty: Penalty, grid: &[f64], start: &Start) -> Vec<PathPoint> {
    let mut beta = start.beta.clone();
    let mut resid = start.resid.clone();
    grid.iter()
        .map(|&lambda| {
            solve(prep, penalty, lambda, &mut beta, &mut resid, None);
            let mut b = beta.clone();
            let mut r = resid.clone();
            snap_zeros(prep, &mut b, &mut r);
            PathPoint { beta: b, resid: r }
        })
        .collect()
}

fn trivial_fit(prep: &Prepared, penalty: Penalty, start: &Start) -> SparseFit {
    to_sparse_fit(prep, penalty, start.lambda_max, &start.beta, &start.resid)
}

/// MCP path with the penalty level chosen by BIC,
/// `n log(RSS/n) + log(n) * df` with df counting nonzero coefficients and
/// the intercept. Ties go to the larger lambda.
pub fn fit_mcp_regression(problem: &RegressionProblem, gamma: f64, lambda_grid_size: usize) -> Result<SparseFit> {
    let penalty = Penalty::Mcp { gamma };
    check_penalty(penalty)?;
    let prep = Prepared::new(problem, &problem.all_rows())?;
    let start = null_start(&prep);
    if !has_signal(&prep, start.lambda_max) {
        return Ok(trivial_fit(&prep, penalty, &start));
    }
    let grid = lambda_grid(start.lambda_max, lambda_grid_size);
    let path = run_path(&prep, penalty, &grid, &start);
    let nf = prep.n as f64;
    let bic = |pt: &PathPoint| {
        let rss: f64 = pt.resid.iter().map(|r| r * r).sum();
        let df = 1 + (0..prep.p).filter(|&j| prep.active[j] && pt.beta[j] != 0.0).count();
        nf * (rss / nf).ln() + nf.ln() * df as f64
    };
    let mut best = 0;
    let mut best_bic = bic(&path[0]);
    for (k, pt) in path.iter().enumerate().skip(1) {
        let b = bic(pt);
        if b < best_bic {
            best = k;
            best_bic = b;
        }
    }
    let pt = &path[best];
    Ok(to_sparse_fit(&prep, penalty, grid[best], &pt.beta, &pt.resid))
}

/// Lasso path with lambda chosen by K-fold cross-validated prediction error.
///
/// Folds come from a shuffle seeded by `fold_seed`; each training fold is
/// re-standardized and fit along the full-data grid.
pub fn fit_lasso(
    problem: &RegressionProblem,
    lambda_grid_size: usize,
    cv_folds: usize,
    fold_seed: u64,
) -> Result<SparseFit> {
    let penalty = Penalty::Lasso;
    let rows = problem.all_rows();
    let prep = Prepared::new(problem, &rows)?;
    let start = null_start(&prep);
    if !has_signal(&prep, start.lambda_max) {
        return Ok(trivial_fit(&prep, penalty, &start));
    }
    let grid = lambda_grid(start.lambda_max, lambda_grid_size);
    let path = run_path(&prep, penalty, &grid, &start);

    let n = problem.n();
    let k = cv_folds.min(n);
    if k < 2 {
        return Err(IfaaError::InvalidData("cross-validation needs at least 2 observations".into()));
    }
    let mut order = rows.clone();
    order.shuffle(&mut stream_rng(fold_seed, DOMAIN_CV_FOLDS, 0));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }

    let mut cv_err = vec![0.0; grid.len()];
    for fold in 0..k {
        let train: Vec<usize> = rows.iter().copied().filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = rows.iter().copied().filter(|&i| fold_of[i] == fold).collect();
        let tprep = Prepared::new(problem, &train)?;
        let tstart = null_start(&tprep);
        let tpath = run_path(&tprep, penalty, &grid, &tstart);
        for (g, pt) in tpath.iter().enumerate() {
            let fit = tprep.to_original(&pt.beta);
            cv_err[g] += test
                .iter()
                .map(|&i| {
                    let e = problem.response[i] - fit.predict_row(&problem.design, i);
                    e * e
                })
                .sum::<f64>();
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if cv_err[g] < cv_err[best] {
            best = g;
        }
    }
    let pt = &path[best];
    Ok(to_sparse_fit(&prep, penalty, grid[best], &pt.beta, &pt.resid))
}

use super::prepare::Prepared;
use super::{Penalty, RegressionProblem, SparseFit, CD_MAX_SWEEPS, CD_TOLERANCE};
use crate::error::{IfaaError, Result};

/// Penalized coefficients smaller than this on the standardized scale are
/// snapped to zero so that "selected" means clearly nonzero.
const ZERO_SNAP: f64 = 1e-12;

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Univariate MCP solution for a unit-scaled coordinate.
pub fn mcp_threshold(z: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(IfaaError::config("mcp_gamma", format!("{gamma} must exceed 1")));
    }
    Ok(mcp_update(z, lambda, gamma, 1.0))
}

pub fn mcp_penalty(b: f64, lambda: f64, gamma: f64) -> f64 {
    let a = b.abs();
    if a <= gamma * lambda {
        lambda * a - a * a / (2.0 * gamma)
    } else {
        0.5 * gamma * lambda * lambda
    }
}

/// argmin_b (v/2) b^2 - z b + mcp(b).
fn mcp_update(z: f64, lambda: f64, gamma: f64, v: f64) -> f64 {
    if v * gamma > 1.0 {
        if z.abs() <= v * gamma * lambda {
            soft_threshold(z, lambda) / (v - 1.0 / gamma)
        } else {
            z / v
        }
    } else {
        // Non-convex coordinate problem: compare the candidate stationary points.
        let f = |b: f64| 0.5 * v * b * b - z * b + mcp_penalty(b, lambda, gamma);
        let edge = gamma * lambda * z.signum();
        let mut best = 0.0;
        for cand in [edge, z / v] {
            if f(cand) < f(best) {
                best = cand;
            }
        }
        best
    }
}

fn update(penalty: Penalty, z: f64, lambda: f64, v: f64) -> f64 {
    match penalty {
        Penalty::Lasso => soft_threshold(z, lambda) / v,
        Penalty::Mcp { gamma } => mcp_update(z, lambda, gamma, v),
    }
}

fn penalty_value(penalty: Penalty, b: f64, lambda: f64) -> f64 {
    match penalty {
        Penalty::Lasso => lambda * b.abs(),
        Penalty::Mcp { gamma } => mcp_penalty(b, lambda, gamma),
    }
}

pub(crate) fn objective(prep: &Prepared, penalty: Penalty, lambda: f64, beta: &[f64], resid: &[f64]) -> f64 {
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * prep.n as f64);
    let pen: f64 = prep.penalized_active().map(|j| penalty_value(penalty, beta[j], lambda)).sum();
    loss + pen
}

/// Cyclic coordinate descent at a fixed lambda, warm-started from `beta`
/// (with `resid` consistent with it). Returns the number of sweeps.
pub(crate) fn solve(
    prep: &Prepared,
    penalty: Penalty,
    lambda: f64,
    beta: &mut [f64],
    resid: &mut [f64],
    mut trace: Option<&mut Vec<f64>>,
) -> usize {
    let nf = prep.n as f64;
    let pen: Vec<usize> = prep.penalized_active().collect();
    for sweep in 1..=CD_MAX_SWEEPS {
        let mut max_change = prep.unpenalized_step(beta, resid);
        for &j in &pen {
            let old = beta[j];
            let v = prep.col_sq[j];
            let z = prep.dot(j, resid) / nf + v * old;
            let new = update(penalty, z, lambda, v);
            if new != old {
                prep.axpy(j, old - new, resid);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(prep, penalty, lambda, beta, resid));
        }
        if max_change < CD_TOLERANCE {
            return sweep;
        }
    }
    log::warn!("coordinate descent hit {CD_MAX_SWEEPS} sweeps without converging");
    CD_MAX_SWEEPS
}

pub(crate) fn snap_zeros(prep: &Prepared, beta: &mut [f64], resid: &mut [f64]) {
    for j in prep.penalized_active().collect::<Vec<_>>() {
        if beta[j] != 0.0 && beta[j].abs() <= ZERO_SNAP {
            prep.axpy(j, beta[j], resid);
            beta[j] = 0.0;
        }
    }
}

pub(crate) fn to_sparse_fit(prep: &Prepared, penalty: Penalty, lambda: f64, beta: &[f64], resid: &[f64]) -> SparseFit {
    let lin = prep.to_original(beta);
    let selected = prep.penalized_active().filter(|&j| beta[j] != 0.0).collect();
    SparseFit {
        intercept: lin.intercept,
        coefficients: lin.coefficients,
        selected,
        lambda,
        objective: objective(prep, penalty, lambda, beta, resid),
    }
}

/// Penalized fit at one fixed lambda, started from zero.
pub fn fit_at_lambda(problem: &RegressionProblem, penalty: Penalty, lambda: f64) -> Result<SparseFit> {
    check_penalty(penalty)?;
    if !(lambda >= 0.0) {
        return Err(IfaaError::config("lambda", "must be nonnegative"));
    }
    let prep = Prepared::new(problem, &problem.all_rows())?;
    Ok(fit_prepared_at(&prep, penalty, lambda))
}

/// Objective value after every coordinate-descent sweep of a fit from zero.
pub fn objective_trace(problem: &RegressionProblem, penalty: Penalty, lambda: f64) -> Result<Vec<f64>> {
    check_penalty(penalty)?;
    let prep = Prepared::new(problem, &problem.all_rows())?;
    let mut beta = vec![0.0; prep.p];
    let mut resid = prep.y.clone();
    let mut trace = vec![objective(&prep, penalty, lambda, &beta, &resid)];
    solve(&prep, penalty, lambda, &mut beta, &mut resid, Some(&mut trace));
    Ok(trace)
}

pub(crate) fn fit_prepared_at(prep: &Prepared, penalty: Penalty, lambda: f64) -> SparseFit {
    let mut beta = vec![0.0; prep.p];
    let mut resid = prep.y.clone();
    solve(prep, penalty, lambda, &mut beta, &mut resid, None);
    snap_zeros(prep, &mut beta, &mut resid);
    to_sparse_fit(prep, penalty, lambda, &beta, &resid)
}

pub(crate) fn check_penalty(penalty: Penalty) -> Result<()> {
    if let Penalty::Mcp { gamma } = penalty {
        if !(gamma > 1.0) {
            return Err(IfaaError::config("mcp_gamma", format!("{gamma} must exceed 1")));
        }
    }
    Ok(())
}

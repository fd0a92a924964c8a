use nalgebra::{Cholesky, DMatrix, DVector};

use super::prepare::Prepared;
use super::{LinearFit, RegressionProblem};
use crate::error::{IfaaError, Result};

/// Least squares with a ridge penalty on the penalized columns outside `support`.
///
/// Minimizes `(1/2n) RSS + (ridge_lambda/2) * sum_{j penalized, j not in support} b_j^2`
/// on the standardized scale by solving the normal equations.
pub fn partial_ridge_refit(problem: &RegressionProblem, support: &[usize], ridge_lambda: f64) -> Result<LinearFit> {
    partial_ridge_rows(problem, &problem.all_rows(), support, ridge_lambda)
}

pub(crate) fn partial_ridge_rows(
    problem: &RegressionProblem,
    rows: &[usize],
    support: &[usize],
    ridge_lambda: f64,
) -> Result<LinearFit> {
    if !(ridge_lambda >= 0.0) {
        return Err(IfaaError::config("ridge_lambda", "must be nonnegative"));
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= problem.p() || !problem.penalty_mask[j]) {
        return Err(IfaaError::InvalidData(format!("support index {bad} is not a penalized column")));
    }
    let prep = Prepared::new(problem, rows)?;
    let active: Vec<usize> = (0..prep.p).filter(|&j| prep.active[j]).collect();
    let mut beta = vec![0.0; prep.p];
    if !active.is_empty() {
        let m = active.len();
        let nf = prep.n as f64;
        let mut gram = DMatrix::from_fn(m, m, |a, b| prep.dot(active[a], prep.col(active[b])) / nf);
        for (a, &j) in active.iter().enumerate() {
            if prep.penalized[j] && !support.contains(&j) {
                gram[(a, a)] += ridge_lambda;
            }
        }
        let rhs = DVector::from_iterator(m, active.iter().map(|&j| prep.dot(j, &prep.y) / nf));
        let chol = Cholesky::new(gram)
            .ok_or_else(|| IfaaError::Numerical("partial ridge system is singular".into()))?;
        let sol = chol.solve(&rhs);
        for (a, &j) in active.iter().enumerate() {
            beta[j] = sol[a];
        }
    }
    Ok(prep.to_original(&beta))
}

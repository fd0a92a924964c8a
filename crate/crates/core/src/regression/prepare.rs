use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{LinearFit, RegressionProblem};
use crate::error::{IfaaError, Result};

/// Columns whose centered standard deviation falls below this (relative to
/// their magnitude) are treated as constant and excluded from the fit.
const DEGENERATE_SD: f64 = 1e-10;

/// Centered (and optionally scaled) copy of a subset of rows of a problem.
pub(crate) struct Prepared {
    pub n: usize,
    pub p: usize,
    /// Column-major `n x p` transformed design.
    pub cols: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// `(1/n) ||x_j||^2` after transformation.
    pub col_sq: Vec<f64>,
    pub active: Vec<bool>,
    pub penalized: Vec<bool>,
    pub y: Vec<f64>,
    pub y_mean: f64,
    pub max_abs_y: f64,
    pub unpen: Vec<usize>,
    pub unpen_chol: Option<Cholesky<f64, Dyn>>,
}

impl Prepared {
    pub fn new(problem: &RegressionProblem, rows: &[usize]) -> Result<Self> {
        let n = rows.len();
        let p = problem.p();
        if n == 0 {
            return Err(IfaaError::InvalidData("no rows to fit".into()));
        }
        let nf = n as f64;
        let mut cols = vec![0.0; n * p];
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        let mut col_sq = vec![0.0; p];
        let mut active = vec![true; p];
        for j in 0..p {
            let src = problem.design.column(j);
            let mean = rows.iter().map(|&i| src[i]).sum::<f64>() / nf;
            let col = &mut cols[j * n..(j + 1) * n];
            for (k, &i) in rows.iter().enumerate() {
                col[k] = src[i] - mean;
            }
            let var = col.iter().map(|v| v * v).sum::<f64>() / nf;
            let sd = var.sqrt();
            center[j] = mean;
            if sd <= DEGENERATE_SD * mean.abs().max(1.0) {
                active[j] = false;
                col.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            if problem.standardize_mask[j] {
                scale[j] = sd;
                col.iter_mut().for_each(|v| *v /= sd);
                col_sq[j] = 1.0;
            } else {
                col_sq[j] = var;
            }
        }
        let y_mean = rows.iter().map(|&i| problem.response[i]).sum::<f64>() / nf;
        let y: Vec<f64> = rows.iter().map(|&i| problem.response[i] - y_mean).collect();
        let max_abs_y = rows.iter().map(|&i| problem.response[i].abs()).fold(0.0, f64::max);

        let unpen: Vec<usize> = (0..p).filter(|&j| active[j] && !problem.penalty_mask[j]).collect();
        let unpen_chol = if unpen.is_empty() {
            None
        } else {
            let m = unpen.len();
            let gram = DMatrix::from_fn(m, m, |a, b| {
                let ca = &cols[unpen[a] * n..(unpen[a] + 1) * n];
                let cb = &cols[unpen[b] * n..(unpen[b] + 1) * n];
                ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>() / nf
            });
            Some(Cholesky::new(gram).ok_or_else(|| {
                IfaaError::Numerical("unpenalized columns are collinear".into())
            })?)
        };
        Ok(Prepared {
            n,
            p,
            cols,
            center,
            scale,
            col_sq,
            active,
            penalized: problem.penalty_mask.clone(),
            y,
            y_mean,
            max_abs_y,
            unpen,
            unpen_chol,
        })
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    pub fn dot(&self, j: usize, v: &[f64]) -> f64 {
        self.col(j).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn axpy(&self, j: usize, alpha: f64, r: &mut [f64]) {
        for (ri, xi) in r.iter_mut().zip(self.col(j)) {
            *ri += alpha * xi;
        }
    }

    /// Exact least-squares step on the unpenalized block; returns the largest change.
    pub fn unpenalized_step(&self, beta: &mut [f64], resid: &mut [f64]) -> f64 {
        let Some(chol) = &self.unpen_chol else { return 0.0 };
        let nf = self.n as f64;
        let rhs = DVector::from_iterator(self.unpen.len(), self.unpen.iter().map(|&j| self.dot(j, resid) / nf));
        let delta = chol.solve(&rhs);
        let mut max_change: f64 = 0.0;
        for (k, &j) in self.unpen.iter().enumerate() {
            let d = delta[k];
            if d != 0.0 {
                beta[j] += d;
                self.axpy(j, -d, resid);
                max_change = max_change.max(d.abs());
            }
        }
        max_change
    }

    pub fn penalized_active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(move |&j| self.active[j] && self.penalized[j])
    }

    /// Map standardized-space coefficients back to the caller's scale.
    pub fn to_original(&self, beta: &[f64]) -> LinearFit {
        let coefficients: Vec<f64> = (0..self.p)
            .map(|j| if self.active[j] { beta[j] / self.scale[j] } else { 0.0 })
            .collect();
        let intercept = self.y_mean - coefficients.iter().zip(&self.center).map(|(b, c)| b * c).sum::<f64>();
        LinearFit { intercept, coefficients }
    }
}

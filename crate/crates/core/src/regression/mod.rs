//! Penalized linear regression: coordinate descent for MCP and Lasso,
//! partial-ridge refits and paired-bootstrap confidence intervals.
//!
//! All solvers share one objective,
//!
//! ```text
//! (1 / 2n) * ||y - b0 - X b||^2 + sum_j pen(b_j)
//! ```
//!
//! evaluated on centered columns, with penalized columns scaled to unit
//! variance when `standardize_mask` asks for it. The intercept is never
//! penalized and coefficients are always reported on the caller's scale.

mod bootstrap;
mod cd;
mod prepare;
mod ridge;
mod select;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{IfaaError, Result};

pub use bootstrap::{bootstrap_lpr_ci, percentile};
pub(crate) use bootstrap::bootstrap_lpr_ci_at_level;
pub use cd::{fit_at_lambda, mcp_penalty, mcp_threshold, objective_trace, soft_threshold};
pub use ridge::partial_ridge_refit;
pub use select::{fit_lasso, fit_mcp_regression, lambda_grid};

/// Coordinate convergence tolerance on the standardized scale.
pub const CD_TOLERANCE: f64 = 1e-7;
pub const CD_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Lasso,
    Mcp { gamma: f64 },
}

/// Design (without intercept column) and response for one linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub design: DMatrix<f64>,
    pub response: Vec<f64>,
    pub penalty_mask: Vec<bool>,
    pub standardize_mask: Vec<bool>,
}

impl RegressionProblem {
    /// Standardizes every column by default.
    pub fn new(design: DMatrix<f64>, response: Vec<f64>, penalty_mask: Vec<bool>) -> Result<Self> {
        let p = design.ncols();
        Self::with_standardize(design, response, penalty_mask, vec![true; p])
    }

    pub fn with_standardize(
        design: DMatrix<f64>,
        response: Vec<f64>,
        penalty_mask: Vec<bool>,
        standardize_mask: Vec<bool>,
    ) -> Result<Self> {
        let (n, p) = design.shape();
        if n == 0 {
            return Err(IfaaError::InvalidData("regression needs at least one observation".into()));
        }
        if response.len() != n || penalty_mask.len() != p || standardize_mask.len() != p {
            return Err(IfaaError::InvalidData(format!(
                "design is {n}x{p}, response has {} entries, masks have {} and {}",
                response.len(),
                penalty_mask.len(),
                standardize_mask.len()
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(IfaaError::InvalidData("design and response must be finite".into()));
        }
        Ok(RegressionProblem { design, response, penalty_mask, standardize_mask })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn penalized_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.penalty_mask[j]).collect()
    }

    pub(crate) fn all_rows(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }
}

/// Intercept plus coefficients on the original covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearFit {
    pub fn predict_row(&self, design: &DMatrix<f64>, row: usize) -> f64 {
        self.intercept
            + self.coefficients.iter().enumerate().map(|(j, b)| b * design[(row, j)]).sum::<f64>()
    }
}

/// Result of a penalized fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Penalized columns with a nonzero coefficient.
    pub selected: Vec<usize>,
    pub lambda: f64,
    pub objective: f64,
}

/// Point estimate with a percentile bootstrap interval per coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub replicates_used: usize,
    pub replicates_skipped: usize,
}

use serde::{Deserialize, Serialize};

use crate::error::{IfaaError, Result};

/// Tuning knobs for the two-phase pipeline.
///
/// Deserializes from a flat TOML/JSON table; absent keys take the defaults
/// below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Family-wise error rate for the phase-1 permutation threshold.
    pub alpha: f64,
    /// Number of randomly drawn reference taxa (R).
    pub r_refs: usize,
    /// Number of X-row permutations (P).
    pub n_perms: usize,
    /// MCP concavity.
    pub mcp_gamma: f64,
    pub lambda_grid_size: usize,
    pub cv_folds: usize,
    pub bootstrap_reps: usize,
    pub ci_level: f64,
    /// Bonferroni-adjust the phase-2 intervals over |set A| x Q tests.
    pub ci_bonferroni: bool,
    /// Minimum number of samples where both taxa of a ratio are nonzero.
    /// `None` means `max(Q + S + 2, 10)`.
    pub min_overlap: Option<usize>,
    pub master_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.25,
            r_refs: 40,
            n_perms: 40,
            mcp_gamma: 3.0,
            lambda_grid_size: 30,
            cv_folds: 5,
            bootstrap_reps: 500,
            ci_level: 0.95,
            ci_bonferroni: false,
            min_overlap: None,
            master_seed: 1,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(IfaaError::config("alpha", format!("{} is not in (0, 1)", self.alpha)));
        }
        if self.r_refs < 2 {
            return Err(IfaaError::config("r_refs", "need at least 2 reference taxa"));
        }
        if self.n_perms < 1 {
            return Err(IfaaError::config("n_perms", "need at least 1 permutation"));
        }
        if !(self.mcp_gamma > 1.0) {
            return Err(IfaaError::config("mcp_gamma", "must exceed 1"));
        }
        if self.lambda_grid_size < 2 {
            return Err(IfaaError::config("lambda_grid_size", "need at least 2 grid points"));
        }
        if self.cv_folds < 2 {
            return Err(IfaaError::config("cv_folds", "need at least 2 folds"));
        }
        if self.bootstrap_reps < 1 {
            return Err(IfaaError::config("bootstrap_reps", "need at least 1 replicate"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(IfaaError::config("ci_level", format!("{} is not in (0, 1)", self.ci_level)));
        }
        if let Some(m) = self.min_overlap {
            if m < 2 {
                return Err(IfaaError::config("min_overlap", "must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn effective_min_overlap(&self, q: usize, s: usize) -> usize {
        self.min_overlap.unwrap_or_else(|| (q + s + 2).max(10))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AnalysisConfig =
            toml::from_str(text).map_err(|e| IfaaError::Serialization(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        AnalysisConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        let cfg = AnalysisConfig { alpha: 1.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(IfaaError::InvalidConfig { field, .. }) if field == "alpha"));
    }

    #[test]
    fn min_overlap_default_rule() {
        let cfg = AnalysisConfig::default();
        assert_eq!(cfg.effective_min_overlap(1, 0), 10);
        assert_eq!(cfg.effective_min_overlap(5, 6), 13);
        let cfg = AnalysisConfig { min_overlap: Some(4), ..Default::default() };
        assert_eq!(cfg.effective_min_overlap(5, 6), 4);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg = AnalysisConfig::from_toml_str("alpha = 0.2\nr_refs = 10\n").unwrap();
        assert_eq!(cfg.alpha, 0.2);
        assert_eq!(cfg.r_refs, 10);
        assert_eq!(cfg.n_perms, 40);
        assert!(AnalysisConfig::from_toml_str("alpa = 0.2").is_err());
    }
}

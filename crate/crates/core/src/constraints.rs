//! Logical constraints over class scores and the violation measures used to
//! audit them: mutual exclusion, implication, counterfactual swing and
//! cross-environment error spread.
//!
//! Every comparison against a threshold is strict. A score exactly equal to
//! `tau` never activates a constraint and never counts as a violation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::scores::ClassScores;

/// Default activation threshold.
pub const DEFAULT_TAU: f64 = 0.4;
/// Default reduction / transfer factor.
pub const DEFAULT_RHO: f64 = 0.3;

/// Mutual-exclusion pairs and implication edges sharing one threshold `tau`
/// and one reduction factor `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Unordered pairs `{a, b}`: both classes may not exceed `tau` together.
    pub exclusions: Vec<(usize, usize)>,
    /// Ordered edges `a -> b`: `p_a > tau` obliges `p_b >= tau`. Applied in
    /// declaration order, so chains should be declared root first.
    pub implications: Vec<(usize, usize)>,
    pub tau: f64,
    pub rho: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            exclusions: Vec::new(),
            implications: Vec::new(),
            tau: DEFAULT_TAU,
            rho: DEFAULT_RHO,
        }
    }
}

impl ConstraintSet {
    pub fn new(tau: f64, rho: f64) -> Result<Self> {
        let cs = Self {
            tau,
            rho,
            ..Self::default()
        };
        cs.check_params()?;
        Ok(cs)
    }

    pub fn exclude(mut self, a: usize, b: usize) -> Self {
        self.exclusions.push((a, b));
        self
    }

    pub fn imply(mut self, a: usize, b: usize) -> Self {
        self.implications.push((a, b));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.exclusions.is_empty() && self.implications.is_empty()
    }

    fn check_params(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(usage(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(usage(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Checks parameters and that every class index fits a `k`-class table.
    pub fn validate(&self, k: usize) -> Result<()> {
        self.check_params()?;
        for &(a, b) in self.exclusions.iter().chain(&self.implications) {
            if a == b {
                return Err(usage(format!("self-pair ({a}, {a}) in constraint set")));
            }
            if a >= k || b >= k {
                return Err(usage(format!("class index out of range for {k} classes: ({a}, {b})")));
            }
        }
        Ok(())
    }

    /// Whether class `c` is named in any constraint.
    pub fn mentions(&self, c: usize) -> bool {
        self.exclusions
            .iter()
            .chain(&self.implications)
            .any(|&(a, b)| a == c || b == c)
    }
}

/// Threshold of the minimal-change counterfactual repair, in outcome units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairConfig {
    pub tau_cf: f64,
}

impl RepairConfig {
    pub fn new(tau_cf: f64) -> Result<Self> {
        if !(tau_cf > 0.0 && tau_cf.is_finite()) {
            return Err(usage(format!("counterfactual threshold must be positive, got {tau_cf}")));
        }
        Ok(Self { tau_cf })
    }
}

/// `min(p_a, p_b)` when both exceed `tau`, else 0.
pub fn violation_score(p_a: f64, p_b: f64, tau: f64) -> f64 {
    if p_a > tau && p_b > tau {
        p_a.min(p_b)
    } else {
        0.0
    }
}

/// Summed exclusion violation scores of one row.
pub fn row_violation(row: &[f64], cs: &ConstraintSet) -> f64 {
    cs.exclusions
        .iter()
        .map(|&(a, b)| violation_score(row[a], row[b], cs.tau))
        .sum()
}

pub(crate) fn row_breaks_exclusion(row: &[f64], cs: &ConstraintSet) -> bool {
    cs.exclusions
        .iter()
        .any(|&(a, b)| row[a] > cs.tau && row[b] > cs.tau)
}

pub(crate) fn row_breaks_implication(row: &[f64], cs: &ConstraintSet) -> bool {
    cs.implications
        .iter()
        .any(|&(a, b)| row[a] > cs.tau && row[b] < cs.tau)
}

fn rate(scores: &ClassScores, cs: &ConstraintSet, breaks: fn(&[f64], &ConstraintSet) -> bool) -> Result<f64> {
    cs.validate(scores.n_classes())?;
    let n = scores.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    let hits = scores
        .table()
        .rows()
        .into_iter()
        .filter(|r| breaks(&r.to_vec(), cs))
        .count();
    Ok(hits as f64 / n as f64)
}

/// Fraction of rows in which some exclusion pair has both scores above `tau`.
pub fn exclusion_violation_rate(scores: &ClassScores, cs: &ConstraintSet) -> Result<f64> {
    rate(scores, cs, row_breaks_exclusion)
}

/// Fraction of rows in which some edge `a -> b` has `p_a > tau` and `p_b < tau`.
pub fn implication_violation_rate(scores: &ClassScores, cs: &ConstraintSet) -> Result<f64> {
    rate(scores, cs, row_breaks_implication)
}

/// Fraction of rows whose largest counterfactual swing `|cf - factual|`
/// exceeds `tau_cf`. `cf` has one row per sample and one column per
/// alternative treatment.
pub fn counterfactual_violation_rate(factual: &[f64], cf: &Array2<f64>, config: &RepairConfig) -> Result<f64> {
    if cf.nrows() != factual.len() {
        return Err(usage(format!(
            "{} counterfactual rows for {} factual predictions",
            cf.nrows(),
            factual.len()
        )));
    }
    if factual.is_empty() {
        return Ok(0.0);
    }
    let hits = cf
        .rows()
        .into_iter()
        .zip(factual)
        .filter(|(row, &f)| row.iter().map(|&c| (c - f).abs()).fold(0.0, f64::max) > config.tau_cf)
        .count();
    Ok(hits as f64 / factual.len() as f64)
}

/// Population variance of per-environment errors; 0 for fewer than two values.
pub fn env_mse_variance(per_env_mse: &[f64]) -> f64 {
    let n = per_env_mse.len();
    if n < 2 {
        return 0.0;
    }
    let mean = per_env_mse.iter().sum::<f64>() / n as f64;
    per_env_mse.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair() -> ConstraintSet {
        ConstraintSet::default().exclude(0, 1)
    }

    #[test]
    fn violation_score_cases() {
        assert_eq!(violation_score(0.45, 0.50, 0.4), 0.45);
        assert_eq!(violation_score(0.45, 0.30, 0.4), 0.0);
        assert_eq!(violation_score(0.40, 0.40, 0.4), 0.0);
    }

    #[test]
    fn exclusion_rate_examples() {
        let zeros = ClassScores::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(exclusion_violation_rate(&zeros, &pair()).unwrap(), 0.0);
        let s = ClassScores::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.1], vec![0.45, 0.41]]).unwrap();
        assert_eq!(exclusion_violation_rate(&s, &pair()).unwrap(), 2.0 / 3.0);
        let empty = ClassScores::new(Array2::zeros((0, 2))).unwrap();
        assert_eq!(exclusion_violation_rate(&empty, &pair()).unwrap(), 0.0);
    }

    #[test]
    fn implication_boundaries() {
        let cs = ConstraintSet::default().imply(0, 1);
        let rate = |a: f64, b: f64| {
            implication_violation_rate(&ClassScores::from_rows(&[vec![a, b]]).unwrap(), &cs).unwrap()
        };
        assert_eq!(rate(0.7, 0.2), 1.0);
        assert_eq!(rate(0.7, 0.4), 0.0);
        assert_eq!(rate(0.3, 0.1), 0.0);
    }

    #[test]
    fn counterfactual_rate_examples() {
        let cfg = RepairConfig::new(2.0).unwrap();
        let factual = [5.0, 5.0, 5.0];
        let cf = array![[7.5, 5.0], [4.0, 6.0], [5.5, 2.0]];
        assert_eq!(counterfactual_violation_rate(&factual, &cf, &cfg).unwrap(), 2.0 / 3.0);
        let same = array![[5.0, 5.0], [5.0, 5.0], [5.0, 5.0]];
        assert_eq!(counterfactual_violation_rate(&factual, &same, &cfg).unwrap(), 0.0);
        assert!(counterfactual_violation_rate(&factual[..2], &cf, &cfg).is_err());
    }

    #[test]
    fn population_variance() {
        assert_eq!(env_mse_variance(&[2.0, 4.0]), 1.0);
        assert_eq!(env_mse_variance(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(env_mse_variance(&[7.0]), 0.0);
    }

    #[test]
    fn validate_rejects_bad_sets() {
        assert!(ConstraintSet::default().exclude(1, 1).validate(3).is_err());
        assert!(ConstraintSet::default().imply(0, 3).validate(3).is_err());
        assert!(ConstraintSet::new(1.0, 0.3).is_err());
        assert!(ConstraintSet::new(0.4, 0.0).is_err());
        assert!(RepairConfig::new(0.0).is_err());
    }
}

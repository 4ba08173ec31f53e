//! Accuracy, MSE, per-group decision reports and equity deltas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{GroupKey, Groups};
use crate::error::{usage, Result};
use crate::learners::Prediction;

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    same_len(predicted.len(), labels.len())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn mse(predicted: &[f64], targets: &[f64]) -> Result<f64> {
    same_len(predicted.len(), targets.len())?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    Ok(predicted.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / targets.len() as f64)
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(usage(format!("{a} predictions for {b} targets")));
    }
    Ok(())
}

/// Score of a prediction against its targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Accuracy(f64),
    Mse(f64),
}

/// Targets matching the kind of a [`Prediction`].
#[derive(Debug, Clone, Copy)]
pub enum Truth<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// Accuracy for class predictions, MSE for point predictions.
pub fn evaluate(prediction: &Prediction, truth: Truth<'_>) -> Result<Evaluation> {
    match (prediction, truth) {
        (Prediction::Classes(p), Truth::Classes(y)) => accuracy(p, y).map(Evaluation::Accuracy),
        (Prediction::Values(p), Truth::Values(y)) => mse(p, y).map(Evaluation::Mse),
        _ => Err(usage("prediction and target kinds differ")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub feature: String,
    pub value: String,
    pub size: usize,
    pub accuracy: f64,
    pub positive_rate: f64,
    /// Set when the group has fewer members than the report's minimum size.
    pub below_min_size: bool,
}

impl GroupStats {
    pub fn key(&self) -> GroupKey {
        GroupKey::new(&self.feature, &self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub groups: Vec<GroupStats>,
    /// Per sensitive feature, best minus worst group accuracy over non-empty groups.
    pub disparities: BTreeMap<String, f64>,
    pub overall_accuracy: f64,
    pub overall_positive_rate: f64,
}

impl GroupReport {
    pub fn get(&self, key: &GroupKey) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.feature == key.feature && g.value == key.value)
    }

    /// Unweighted mean positive rate over `keys`; `None` if any is missing.
    pub fn mean_positive_rate(&self, keys: &[GroupKey]) -> Option<f64> {
        if keys.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for k in keys {
            total += self.get(k)?.positive_rate;
        }
        Some(total / keys.len() as f64)
    }
}

/// Per-group accuracy and positive-decision rate of binary `decisions`.
pub fn group_report(decisions: &[usize], labels: &[usize], groups: &Groups, min_size: usize) -> Result<GroupReport> {
    same_len(decisions.len(), labels.len())?;
    if groups.n_samples() != labels.len() {
        return Err(usage("group membership does not match the evaluated rows"));
    }
    let k = groups.n_groups();
    let mut size = vec![0usize; k];
    let mut hits = vec![0usize; k];
    let mut positives = vec![0usize; k];
    for i in 0..labels.len() {
        for &g in groups.of(i) {
            size[g] += 1;
            hits[g] += usize::from(decisions[i] == labels[i]);
            positives[g] += usize::from(decisions[i] == 1);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let stats: Vec<GroupStats> = groups
        .keys()
        .iter()
        .enumerate()
        .map(|(g, key)| GroupStats {
            feature: key.feature.clone(),
            value: key.value.clone(),
            size: size[g],
            accuracy: ratio(hits[g], size[g]),
            positive_rate: ratio(positives[g], size[g]),
            below_min_size: size[g] < min_size,
        })
        .collect();

    let mut spread: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for s in stats.iter().filter(|s| s.size > 0) {
        let e = spread.entry(s.feature.clone()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(s.accuracy);
        e.1 = e.1.max(s.accuracy);
    }
    let disparities = spread.into_iter().map(|(f, (lo, hi))| (f, hi - lo)).collect();
    let n = labels.len();
    Ok(GroupReport {
        groups: stats,
        disparities,
        overall_accuracy: ratio(decisions.iter().zip(labels).filter(|(d, y)| d == y).count(), n),
        overall_positive_rate: ratio(decisions.iter().filter(|&&d| d == 1).count(), n),
    })
}

/// Change in worst-off positive rates and in the best/worst gap, in percent.
/// A field is `None` when its baseline denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityDeltas {
    pub worst_off_rate_improvement_pct: Option<f64>,
    pub gap_reduction_pct: Option<f64>,
    pub overall_accuracy_delta: f64,
    pub base_worst_off_rate: f64,
    pub treated_worst_off_rate: f64,
    pub base_gap: f64,
    pub treated_gap: f64,
}

/// Rates are unweighted means of the listed groups' positive-decision rates.
pub fn equity_deltas(
    base: &GroupReport,
    treated: &GroupReport,
    worst_off: &[GroupKey],
    best_off: &[GroupKey],
) -> Result<EquityDeltas> {
    let missing = || usage("worst-off and best-off groups must be non-empty and present in both reports");
    let bw = base.mean_positive_rate(worst_off).ok_or_else(missing)?;
    let tw = treated.mean_positive_rate(worst_off).ok_or_else(missing)?;
    let bb = base.mean_positive_rate(best_off).ok_or_else(missing)?;
    let tb = treated.mean_positive_rate(best_off).ok_or_else(missing)?;
    Ok(from_rates(bw, bb, tw, tb, treated.overall_accuracy - base.overall_accuracy))
}

/// [`EquityDeltas`] from already aggregated worst-off and best-off rates.
pub fn from_rates(base_worst: f64, base_best: f64, treated_worst: f64, treated_best: f64, accuracy_delta: f64) -> EquityDeltas {
    let base_gap = base_best - base_worst;
    let treated_gap = treated_best - treated_worst;
    EquityDeltas {
        worst_off_rate_improvement_pct: (base_worst != 0.0).then(|| (treated_worst - base_worst) / base_worst * 100.0),
        gap_reduction_pct: (base_gap != 0.0).then(|| (base_gap - treated_gap) / base_gap * 100.0),
        overall_accuracy_delta: accuracy_delta,
        base_worst_off_rate: base_worst,
        treated_worst_off_rate: treated_worst,
        base_gap,
        treated_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        assert_eq!(
            evaluate(&Prediction::Classes(vec![0, 1]), Truth::Classes(&[0, 1])).unwrap(),
            Evaluation::Accuracy(1.0)
        );
        assert_eq!(accuracy(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(mse(&[2.0, 2.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(mse(&[1.5], &[1.5]).unwrap(), 0.0);
        assert!(evaluate(&Prediction::Values(vec![1.0]), Truth::Classes(&[1])).is_err());
    }

    #[test]
    fn six_row_report() {
        let groups = Groups::from_labels("gender", &["f", "f", "f", "m", "m", "m"]);
        let decisions = [1, 0, 0, 1, 1, 0];
        let labels = [1, 1, 0, 1, 0, 0];
        let r = group_report(&decisions, &labels, &groups, 3).unwrap();
        let f = r.get(&GroupKey::new("gender", "f")).unwrap();
        assert_eq!((f.size, f.accuracy, f.positive_rate), (3, 2.0 / 3.0, 1.0 / 3.0));
        let m = r.get(&GroupKey::new("gender", "m")).unwrap();
        assert_eq!((m.size, m.accuracy, m.positive_rate), (3, 2.0 / 3.0, 2.0 / 3.0));
        assert_eq!(r.disparities["gender"], 0.0);
        assert_eq!(r.overall_accuracy, 4.0 / 6.0);
        assert_eq!(r.overall_positive_rate, 0.5);
        assert!(!f.below_min_size);
    }

    #[test]
    fn disparity_is_accuracy_spread() {
        let groups = Groups::from_labels("g", &["a", "a", "a", "a", "a", "b", "b", "b", "b", "b"]);
        let labels = [1; 10];
        let decisions = [1, 1, 1, 1, 0, 1, 1, 1, 0, 0];
        let r = group_report(&decisions, &labels, &groups, 20).unwrap();
        assert!((r.disparities["g"] - 0.2).abs() < 1e-12);
        assert!(r.groups.iter().all(|g| g.below_min_size));
        let single = Groups::from_labels("g", &["a"; 10]);
        assert_eq!(group_report(&decisions, &labels, &single, 1).unwrap().disparities["g"], 0.0);
    }

    #[test]
    fn equity_examples() {
        let d = from_rates(0.225, 0.235, 0.334, 0.329, 0.0);
        assert!((d.gap_reduction_pct.unwrap() - 150.0).abs() < 1e-9);
        assert!((d.worst_off_rate_improvement_pct.unwrap() - 48.444_444_444_444_44).abs() < 1e-9);
        let same = from_rates(0.2, 0.3, 0.2, 0.3, 0.0);
        assert_eq!(same.worst_off_rate_improvement_pct, Some(0.0));
        assert_eq!(same.gap_reduction_pct, Some(0.0));
        let flat = from_rates(0.0, 0.0, 0.1, 0.1, 0.0);
        assert_eq!(flat.worst_off_rate_improvement_pct, None);
        assert_eq!(flat.gap_reduction_pct, None);
    }
}

//! Worst-off group threshold calibration.
//!
//! A trained binary classifier is left untouched; only its decision threshold
//! moves, and only for members of the worst-off groups. Groups are identified
//! on a held-out calibration split from their accuracy at the default
//! threshold. The search maximises a blend of the minimum and the mean
//! accuracy over those groups, subject to keeping a fixed share of the
//! baseline overall accuracy.

use serde::{Deserialize, Serialize};

use crate::data::{GroupKey, Groups};
use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub min_group_size: usize,
    /// Share of the training data held out for calibration.
    pub validation_split: f64,
    pub min_accuracy_retention: f64,
    pub worst_off_fraction: f64,
    pub max_worst_off_groups: usize,
    pub threshold_step: f64,
    pub minimax_weight: f64,
    pub average_weight: f64,
    /// One threshold per worst-off group instead of one shared threshold.
    pub per_group_mode: bool,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            min_group_size: 20,
            validation_split: 0.20,
            min_accuracy_retention: 0.90,
            worst_off_fraction: 1.0 / 3.0,
            max_worst_off_groups: 5,
            threshold_step: 0.02,
            minimax_weight: 0.70,
            average_weight: 0.30,
            per_group_mode: false,
            seed: 42,
        }
    }
}

impl CalibrationConfig {
    fn grid(&self) -> Result<Vec<f64>> {
        let step = self.threshold_step;
        if !(step > 0.0 && step <= 0.5) {
            return Err(usage(format!("threshold step must lie in (0, 0.5], got {step}")));
        }
        let m = (1.0 / step).round();
        if (m * step - 1.0).abs() > 1e-9 {
            return Err(usage(format!("threshold step {step} does not divide (0, 1)")));
        }
        Ok((1..m as usize).map(|i| i as f64 * step).collect())
    }

    fn validate(&self) -> Result<()> {
        if (self.minimax_weight + self.average_weight - 1.0).abs() > 1e-12
            || self.minimax_weight < 0.0
            || self.average_weight < 0.0
        {
            return Err(usage("minimax and average weights must be non-negative and sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.min_accuracy_retention) {
            return Err(usage("min_accuracy_retention must lie in [0, 1]"));
        }
        if !(self.worst_off_fraction > 0.0 && self.worst_off_fraction <= 1.0) {
            return Err(usage("worst_off_fraction must lie in (0, 1]"));
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(usage("validation_split must lie in (0, 1)"));
        }
        self.grid().map(|_| ())
    }
}

/// Decision thresholds produced by [`calibrate_rawlsian_thresholds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub default_threshold: f64,
    pub worst_off_groups: Vec<GroupKey>,
    pub shared_worst_off_threshold: Option<f64>,
    /// Same order as `worst_off_groups`.
    pub per_group_thresholds: Option<Vec<f64>>,
    pub infeasible: bool,
    /// Overall calibration-split accuracy at the default threshold.
    pub baseline_accuracy: f64,
    /// Overall calibration-split accuracy under this policy.
    pub calibrated_accuracy: f64,
    pub objective: Option<f64>,
}

impl ThresholdPolicy {
    fn fallback(worst_off_groups: Vec<GroupKey>, baseline_accuracy: f64) -> Self {
        Self {
            default_threshold: 0.5,
            worst_off_groups,
            shared_worst_off_threshold: None,
            per_group_thresholds: None,
            infeasible: true,
            baseline_accuracy,
            calibrated_accuracy: baseline_accuracy,
            objective: None,
        }
    }

    /// Threshold for a sample belonging to the given groups.
    fn threshold_for(&self, member_of: &[Option<usize>]) -> f64 {
        if self.infeasible {
            return self.default_threshold;
        }
        let first = member_of.iter().position(Option::is_some);
        match (first, self.shared_worst_off_threshold, &self.per_group_thresholds) {
            (Some(_), Some(t), _) => t,
            (Some(j), None, Some(ts)) => ts[j],
            _ => self.default_threshold,
        }
    }
}

/// Picks the worst-off groups: eligible groups (size at least
/// `min_group_size`) sorted by ascending accuracy, ties by key, truncated to
/// `ceil(worst_off_fraction * eligible)` capped at `max_worst_off_groups`.
pub fn select_worst_off(stats: &[(GroupKey, usize, f64)], config: &CalibrationConfig) -> Vec<GroupKey> {
    let mut eligible: Vec<&(GroupKey, usize, f64)> =
        stats.iter().filter(|(_, size, _)| *size >= config.min_group_size).collect();
    if eligible.is_empty() {
        return Vec::new();
    }
    eligible.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
    let count = ((config.worst_off_fraction * eligible.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let count = count.min(config.max_worst_off_groups).min(eligible.len());
    eligible[..count].iter().map(|(k, _, _)| k.clone()).collect()
}

struct Evaluator<'a> {
    scores: &'a [f64],
    labels: &'a [usize],
    /// For each sample, the position of its first worst-off group, if any.
    slot: Vec<Option<usize>>,
    /// Sample indices of each worst-off group.
    members: Vec<Vec<usize>>,
    config: &'a CalibrationConfig,
}

impl Evaluator<'_> {
    fn correct(&self, i: usize, threshold: f64) -> bool {
        usize::from(self.scores[i] > threshold) == self.labels[i]
    }

    fn threshold(&self, i: usize, thresholds: &[f64]) -> f64 {
        self.slot[i].map_or(0.5, |j| thresholds[j.min(thresholds.len() - 1)])
    }

    /// (overall accuracy, objective) for per-slot thresholds. A single-entry
    /// slice acts as the shared threshold.
    fn evaluate(&self, thresholds: &[f64]) -> (f64, f64) {
        let n = self.scores.len();
        let correct: Vec<bool> = (0..n).map(|i| self.correct(i, self.threshold(i, thresholds))).collect();
        let overall = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
        let accs: Vec<f64> = self
            .members
            .iter()
            .map(|m| m.iter().filter(|&&i| correct[i]).count() as f64 / m.len() as f64)
            .collect();
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        (overall, self.config.minimax_weight * min + self.config.average_weight * mean)
    }
}

/// Better candidate: higher objective, then closer to 0.5, then lower.
fn improves(candidate: (f64, f64), incumbent: Option<(f64, f64)>) -> bool {
    match incumbent {
        None => true,
        Some((obj, t)) => {
            let (c_obj, c_t) = candidate;
            if c_obj != obj {
                return c_obj > obj;
            }
            let (dc, di) = ((c_t - 0.5).abs(), (t - 0.5).abs());
            if dc != di {
                return dc < di;
            }
            c_t < t
        }
    }
}

/// Grid search over worst-off thresholds on a calibration split.
///
/// `scores` are positive-class probabilities and `labels` are 0/1. Returns an
/// infeasible default policy when no group is large enough or no grid point
/// keeps the required share of baseline accuracy.
pub fn calibrate_rawlsian_thresholds(
    scores: &[f64],
    labels: &[usize],
    groups: &Groups,
    config: &CalibrationConfig,
) -> Result<ThresholdPolicy> {
    config.validate()?;
    let n = scores.len();
    if labels.len() != n || groups.n_samples() != n {
        return Err(usage("scores, labels and groups must have equal length"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(usage("threshold calibration needs binary labels"));
    }
    if n == 0 {
        return Ok(ThresholdPolicy::fallback(Vec::new(), 0.0));
    }
    let grid = config.grid()?;

    let baseline_correct: Vec<bool> = (0..n).map(|i| usize::from(scores[i] > 0.5) == labels[i]).collect();
    let baseline_accuracy = baseline_correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let mut hits = vec![0usize; groups.n_groups()];
    for i in 0..n {
        if baseline_correct[i] {
            for &g in groups.of(i) {
                hits[g] += 1;
            }
        }
    }
    let stats: Vec<(GroupKey, usize, f64)> = groups
        .keys()
        .iter()
        .zip(groups.sizes())
        .zip(hits)
        .map(|((k, size), h)| (k.clone(), size, if size == 0 { 0.0 } else { h as f64 / size as f64 }))
        .collect();
    let worst = select_worst_off(&stats, config);
    if worst.is_empty() {
        return Ok(ThresholdPolicy::fallback(worst, baseline_accuracy));
    }
    let ids: Vec<usize> = worst.iter().map(|k| groups.id(k).expect("selected from these groups")).collect();
    let slot: Vec<Option<usize>> = (0..n)
        .map(|i| ids.iter().position(|g| groups.of(i).contains(g)))
        .collect();
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|g| (0..n).filter(|&i| groups.of(i).contains(g)).collect())
        .collect();
    let eval = Evaluator {
        scores,
        labels,
        slot,
        members,
        config,
    };
    let floor = config.min_accuracy_retention * baseline_accuracy;

    if !config.per_group_mode {
        let mut best: Option<(f64, f64, f64)> = None; // (objective, threshold, overall)
        for &t in &grid {
            let (overall, obj) = eval.evaluate(&[t]);
            if overall >= floor && improves((obj, t), best.map(|b| (b.0, b.1))) {
                best = Some((obj, t, overall));
            }
        }
        return Ok(match best {
            None => ThresholdPolicy::fallback(worst, baseline_accuracy),
            Some((obj, t, overall)) => ThresholdPolicy {
                default_threshold: 0.5,
                worst_off_groups: worst,
                shared_worst_off_threshold: Some(t),
                per_group_thresholds: None,
                infeasible: false,
                baseline_accuracy,
                calibrated_accuracy: overall,
                objective: Some(obj),
            },
        });
    }

    // Per-group thresholds by coordinate ascent from the default.
    let mut thresholds = vec![0.5; worst.len()];
    let mut feasible_any = false;
    for _sweep in 0..50 {
        let mut changed = false;
        for j in 0..thresholds.len() {
            let mut best: Option<(f64, f64)> = None;
            for &t in &grid {
                let mut trial = thresholds.clone();
                trial[j] = t;
                let (overall, obj) = eval.evaluate(&trial);
                if overall >= floor && improves((obj, t), best) {
                    best = Some((obj, t));
                }
            }
            if let Some((_, t)) = best {
                feasible_any = true;
                if t != thresholds[j] {
                    thresholds[j] = t;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if !feasible_any {
        return Ok(ThresholdPolicy::fallback(worst, baseline_accuracy));
    }
    let (overall, obj) = eval.evaluate(&thresholds);
    Ok(ThresholdPolicy {
        default_threshold: 0.5,
        worst_off_groups: worst,
        shared_worst_off_threshold: None,
        per_group_thresholds: Some(thresholds),
        infeasible: false,
        baseline_accuracy,
        calibrated_accuracy: overall,
        objective: Some(obj),
    })
}

/// Binary decisions `1[p > threshold]`, where members of a worst-off group use
/// the policy threshold and everyone else the default.
pub fn apply_threshold_policy(scores: &[f64], groups: &Groups, policy: &ThresholdPolicy) -> Result<Vec<usize>> {
    if groups.n_samples() != scores.len() {
        return Err(usage("scores and groups must have equal length"));
    }
    let ids: Vec<Option<usize>> = policy.worst_off_groups.iter().map(|k| groups.id(k)).collect();
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let member_of: Vec<Option<usize>> = ids
                .iter()
                .map(|id| id.filter(|g| groups.of(i).contains(g)))
                .collect();
            usize::from(p > policy.threshold_for(&member_of))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> CalibrationConfig {
        CalibrationConfig {
            min_group_size: 2,
            ..CalibrationConfig::default()
        }
    }

    #[test]
    fn two_group_example_picks_closest_maximiser() {
        let scores = [0.6, 0.2, 0.35, 0.1];
        let labels = [1, 0, 1, 0];
        let groups = Groups::from_labels("g", &["A", "A", "B", "B"]);
        let policy = calibrate_rawlsian_thresholds(&scores, &labels, &groups, &small_config()).unwrap();
        assert!(!policy.infeasible);
        assert_eq!(policy.worst_off_groups, vec![GroupKey::new("g", "B")]);
        assert!((policy.shared_worst_off_threshold.unwrap() - 0.34).abs() < 1e-12);
        assert_eq!(policy.baseline_accuracy, 0.75);
        assert_eq!(policy.calibrated_accuracy, 1.0);
    }

    #[test]
    fn equal_groups_keep_default() {
        let scores = [0.9, 0.1, 0.8, 0.2];
        let labels = [1, 0, 1, 0];
        let groups = Groups::from_labels("g", &["A", "A", "B", "B"]);
        let policy = calibrate_rawlsian_thresholds(&scores, &labels, &groups, &small_config()).unwrap();
        assert!(!policy.infeasible);
        assert_eq!(policy.shared_worst_off_threshold, Some(0.5));
    }

    #[test]
    fn no_large_group_is_infeasible() {
        let groups = Groups::from_labels("g", &["A", "B"]);
        let policy = calibrate_rawlsian_thresholds(&[0.7, 0.3], &[1, 0], &groups, &CalibrationConfig::default()).unwrap();
        assert!(policy.infeasible);
        let d = apply_threshold_policy(&[0.7, 0.3], &groups, &policy).unwrap();
        assert_eq!(d, vec![1, 0]);
    }

    #[test]
    fn policy_threshold_is_strict() {
        let groups = Groups::from_labels("g", &["B", "B", "A"]);
        let policy = ThresholdPolicy {
            default_threshold: 0.5,
            worst_off_groups: vec![GroupKey::new("g", "B")],
            shared_worst_off_threshold: Some(0.30),
            per_group_thresholds: None,
            infeasible: false,
            baseline_accuracy: 1.0,
            calibrated_accuracy: 1.0,
            objective: None,
        };
        let d = apply_threshold_policy(&[0.31, 0.30, 0.31], &groups, &policy).unwrap();
        assert_eq!(d, vec![1, 0, 0]);
    }

    #[test]
    fn worst_off_count_rounds_up_and_caps() {
        let cfg = CalibrationConfig::default();
        let stats: Vec<(GroupKey, usize, f64)> = (0..10)
            .map(|i| (GroupKey::new("g", format!("{i}")), 30, 1.0 - i as f64 / 20.0))
            .collect();
        assert_eq!(select_worst_off(&stats, &cfg).len(), 4);
        let many: Vec<(GroupKey, usize, f64)> = (0..30)
            .map(|i| (GroupKey::new("g", format!("{i:02}")), 30, 0.5))
            .collect();
        let picked = select_worst_off(&many, &cfg);
        assert_eq!(picked.len(), 5);
        assert_eq!(picked[0].value, "00");
    }

    #[test]
    fn per_group_mode_respects_retention() {
        let scores = [0.6, 0.2, 0.35, 0.1, 0.45, 0.3];
        let labels = [1, 0, 1, 0, 1, 0];
        let groups = Groups::from_labels("g", &["A", "A", "B", "B", "C", "C"]);
        let cfg = CalibrationConfig {
            per_group_mode: true,
            worst_off_fraction: 1.0,
            ..small_config()
        };
        let policy = calibrate_rawlsian_thresholds(&scores, &labels, &groups, &cfg).unwrap();
        assert!(!policy.infeasible);
        assert_eq!(policy.per_group_thresholds.as_ref().unwrap().len(), 3);
        assert!(policy.calibrated_accuracy >= 0.9 * policy.baseline_accuracy);
        let d = apply_threshold_policy(&scores, &groups, &policy).unwrap();
        assert_eq!(d, vec![1, 0, 1, 0, 1, 0]);
    }
}

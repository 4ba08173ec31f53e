//! Constraint-aware and logic-guided training.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraints::{row_violation, ConstraintSet};
use crate::data::Dataset;
use crate::enforcers::{exclude_row, imply_row};
use crate::error::{usage, Error, Result};
use crate::learners::linear::sigmoid;
use crate::learners::mlp::bce_from_logit;
use crate::learners::{
    binary_labels, fit_forest, fit_linear, forest::Forest, response, BatchLoss, FittedModel, ForestParams, Logistic,
    Mlp, MlpParams, ScorePenalty,
};
use crate::scores::ClassScores;

/// Exclusion repair followed by implication transfer.
pub fn logic_layer(scores: &ClassScores, cs: &ConstraintSet) -> Result<ClassScores> {
    cs.validate(scores.n_classes())?;
    let mut out = scores.clone();
    for mut row in out.table_mut().rows_mut() {
        let mut buf = row.to_vec();
        logic_row(&mut buf, None, cs);
        row.assign(&ndarray::ArrayView1::from(&buf));
    }
    Ok(out)
}

pub(crate) fn logic_row(row: &mut [f64], mut tangent: Option<&mut [f64]>, cs: &ConstraintSet) {
    exclude_row(row, tangent.as_deref_mut(), cs);
    imply_row(row, tangent, cs);
}

/// Which learner a training-time modification is applied to.
#[derive(Debug, Clone)]
pub enum BaseLearner {
    Forest(ForestParams),
    Logistic,
    Mlp(MlpParams),
}

impl FromStr for BaseLearner {
    type Err = Error;

    /// `forest`, `logistic` (alias `linear`) or `mlp`, with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(BaseLearner::Forest(ForestParams::default())),
            "logistic" | "linear" => Ok(BaseLearner::Logistic),
            "mlp" => Ok(BaseLearner::Mlp(MlpParams::default())),
            other => Err(usage(format!("unknown base learner `{other}`; expected forest, logistic or mlp"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLossConfig {
    /// Weight of the mean violation penalty for gradient-trained learners.
    pub lambda: f64,
    /// Decay rate of the sample weights `exp(-alpha * V)` for the forest.
    pub alpha: f64,
    /// Reweighting rounds for the forest.
    pub rounds: usize,
}

impl Default for ConstraintLossConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            alpha: 5.0,
            rounds: 3,
        }
    }
}

impl ConstraintLossConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0 && self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(usage("lambda and alpha must be finite and non-negative"));
        }
        if self.rounds == 0 {
            return Err(usage("rounds must be at least 1"));
        }
        Ok(())
    }
}

/// Bootstrap weight of a sample with violation score `v`.
pub fn sample_weight(v: f64, alpha: f64) -> f64 {
    (-alpha * v).exp()
}

/// Summed exclusion violation `min(p_a, p_b)` of a score row, with its
/// subgradient: 1 on the smaller score of each active pair, 0 elsewhere.
#[derive(Debug, Clone)]
pub struct ExclusionPenalty<'a> {
    pub constraints: &'a ConstraintSet,
}

impl ScorePenalty for ExclusionPenalty<'_> {
    fn value_and_grad(&self, scores: &[f64], grad: &mut [f64]) -> f64 {
        let tau = self.constraints.tau;
        let mut total = 0.0;
        for &(a, b) in &self.constraints.exclusions {
            if scores[a] > tau && scores[b] > tau {
                let low = if scores[b] < scores[a] { b } else { a };
                total += scores[low];
                grad[low] += 1.0;
            }
        }
        total
    }
}

/// Mean BCE plus `lambda` times the mean exclusion violation of `[1 - p, p]`.
#[derive(Debug, Clone)]
pub struct ConstraintPenaltyLoss {
    pub constraints: ConstraintSet,
    pub lambda: f64,
}

impl BatchLoss for ConstraintPenaltyLoss {
    fn loss_and_grad(&self, logits: &[f64], labels: &[f64], _rows: &[usize]) -> (f64, Vec<f64>) {
        let n = logits.len() as f64;
        let penalty = ExclusionPenalty {
            constraints: &self.constraints,
        };
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(logits.len());
        for (&z, &y) in logits.iter().zip(labels) {
            let p = sigmoid(z);
            let mut g = [0.0; 2];
            let v = penalty.value_and_grad(&[1.0 - p, p], &mut g);
            loss += bce_from_logit(z, y) + self.lambda * v;
            grad.push((p - y) / n + self.lambda * (g[1] - g[0]) * p * (1.0 - p) / n);
        }
        (loss / n, grad)
    }
}

/// Cross-entropy of the post-layer score of the true class, differentiated
/// through the layer. The `tau - eps` clamp contributes zero gradient.
#[derive(Debug, Clone)]
pub struct LogicLayerLoss {
    pub constraints: ConstraintSet,
}

impl LogicLayerLoss {
    const FLOOR: f64 = 1e-12;
}

impl BatchLoss for LogicLayerLoss {
    fn loss_and_grad(&self, logits: &[f64], labels: &[f64], _rows: &[usize]) -> (f64, Vec<f64>) {
        let n = logits.len() as f64;
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(logits.len());
        for (&z, &y) in logits.iter().zip(labels) {
            let p = sigmoid(z);
            let dp = p * (1.0 - p);
            let mut s = [1.0 - p, p];
            let mut t = [-dp, dp];
            logic_row(&mut s, Some(&mut t), &self.constraints);
            let c = usize::from(y > 0.5);
            if s[c] > Self::FLOOR {
                loss -= s[c].ln();
                grad.push(-t[c] / s[c] / n);
            } else {
                loss -= Self::FLOOR.ln();
                grad.push(0.0);
            }
        }
        (loss / n, grad)
    }
}

/// Trains `base` so that exclusion violations are discouraged.
///
/// Gradient learners minimise `L_base + lambda * mean V(x)`. The forest is
/// refitted `rounds` times on a bootstrap weighted by `exp(-alpha * V(x))`,
/// with `V` taken from the previous round's out-of-bag scores.
pub fn constraint_aware_fit(
    base: &BaseLearner,
    ds: &Dataset,
    cs: &ConstraintSet,
    config: &ConstraintLossConfig,
) -> Result<FittedModel> {
    config.validate()?;
    ds.validate()?;
    let (labels, n_classes) = ds.class_labels()?;
    cs.validate(n_classes.max(2))?;
    match base {
        BaseLearner::Forest(params) => {
            let y = response(ds)?;
            let (mut forest, mut oob) = Forest::fit_with_oob(&ds.features, y, None, params)?;
            for _ in 0..config.rounds {
                let weights: Vec<f64> = oob
                    .rows()
                    .into_iter()
                    .map(|r| sample_weight(row_violation(&r.to_vec(), cs), config.alpha))
                    .collect();
                let uniform = weights.iter().all(|&w| w == weights[0]);
                (forest, oob) = Forest::fit_with_oob(&ds.features, y, (!uniform).then_some(&weights[..]), params)?;
            }
            Ok(FittedModel::Forest(forest))
        }
        BaseLearner::Logistic => {
            let penalty = ExclusionPenalty { constraints: cs };
            let pen: Option<(&dyn ScorePenalty, f64)> = (config.lambda > 0.0).then_some((&penalty as _, config.lambda));
            Logistic::fit_penalized(&ds.features, labels, n_classes, pen).map(FittedModel::Logistic)
        }
        BaseLearner::Mlp(params) => {
            let y = binary_labels(ds)?;
            let params = MlpParams {
                loss: Some(Arc::new(ConstraintPenaltyLoss {
                    constraints: cs.clone(),
                    lambda: config.lambda,
                })),
                ..params.clone()
            };
            Mlp::train(&ds.features, &y, &params).map(FittedModel::Mlp)
        }
    }
}

/// Fits `base` with the logic layer on its output.
///
/// For the network the layer sits in the forward pass during training as well
/// as inference; trees and logistic models are fitted as usual and wrapped.
/// An empty constraint set returns the plain fit.
pub fn logic_guided_fit(base: &BaseLearner, ds: &Dataset, cs: &ConstraintSet) -> Result<FittedModel> {
    ds.validate()?;
    let (_, n_classes) = ds.class_labels()?;
    cs.validate(n_classes.max(2))?;
    let inner = match base {
        BaseLearner::Forest(params) => fit_forest(ds, params)?,
        BaseLearner::Logistic => fit_linear(ds)?,
        BaseLearner::Mlp(params) => {
            let y = binary_labels(ds)?;
            let params = if cs.is_empty() {
                params.clone()
            } else {
                MlpParams {
                    loss: Some(Arc::new(LogicLayerLoss { constraints: cs.clone() })),
                    ..params.clone()
                }
            };
            FittedModel::Mlp(Mlp::train(&ds.features, &y, &params)?)
        }
    };
    if cs.is_empty() {
        return Ok(inner);
    }
    Ok(FittedModel::LogicWrapped {
        inner: Box::new(inner),
        constraints: cs.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_example() {
        let cs = ConstraintSet::default().exclude(0, 1).imply(0, 2);
        let s = ClassScores::from_rows(&[vec![0.6, 0.5, 0.1]]).unwrap();
        let out = logic_layer(&s, &cs).unwrap();
        let r = out.row(0).to_vec();
        assert_eq!(r[0], 0.6);
        assert!((r[1] - 0.35).abs() < 1e-15);
        assert!((r[2] - 0.28).abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_identity() {
        let s = ClassScores::from_rows(&[vec![0.6, 0.5, 0.1], vec![0.2, 0.2, 0.9]]).unwrap();
        assert_eq!(logic_layer(&s, &ConstraintSet::default()).unwrap(), s);
    }

    #[test]
    fn weight_formula() {
        assert!((sample_weight(0.45, 1.0) - 0.637_628_151_621_773_3).abs() < 1e-12);
        assert_eq!(sample_weight(0.3, 0.0), 1.0);
    }

    #[test]
    fn unknown_learner_name() {
        assert!(matches!("svm".parse::<BaseLearner>(), Err(Error::Usage(_))));
        assert!(matches!("mlp".parse::<BaseLearner>(), Ok(BaseLearner::Mlp(_))));
    }

    #[test]
    fn penalty_gradient_picks_lower_score() {
        let cs = ConstraintSet::default().exclude(0, 1);
        let pen = ExclusionPenalty { constraints: &cs };
        let mut g = [0.0; 2];
        assert_eq!(pen.value_and_grad(&[0.45, 0.55], &mut g), 0.45);
        assert_eq!(g, [1.0, 0.0]);
        let mut g = [0.0; 2];
        assert_eq!(pen.value_and_grad(&[0.3, 0.7], &mut g), 0.0);
        assert_eq!(g, [0.0, 0.0]);
    }

    fn finite_difference_check(loss: &dyn BatchLoss, logits: &[f64], labels: &[f64]) {
        let rows: Vec<usize> = (0..logits.len()).collect();
        let (_, g) = loss.loss_and_grad(logits, labels, &rows);
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut up = logits.to_vec();
            up[i] += h;
            let mut down = logits.to_vec();
            down[i] -= h;
            let fd = (loss.loss_and_grad(&up, labels, &rows).0 - loss.loss_and_grad(&down, labels, &rows).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "logit {i}: analytic {} vs numeric {fd}", g[i]);
        }
    }

    #[test]
    fn penalty_loss_gradient_matches_finite_differences() {
        let loss = ConstraintPenaltyLoss {
            constraints: ConstraintSet::default().exclude(0, 1),
            lambda: 2.0,
        };
        // Logits chosen away from the gate boundaries and p = 0.5.
        finite_difference_check(&loss, &[0.1, -0.25, 1.7, -2.0, 0.3], &[1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn layer_loss_gradient_matches_finite_differences() {
        let loss = LogicLayerLoss {
            constraints: ConstraintSet::default().exclude(0, 1),
        };
        finite_difference_check(&loss, &[0.1, -0.25, 1.7, -2.0, 0.3], &[1.0, 1.0, 0.0, 1.0, 0.0]);
    }
}

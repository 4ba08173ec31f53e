//! Group-aware training objectives: a tree impurity and a network loss that
//! weigh the worst-served sensitive groups. Groups shape the objective only;
//! they are never inputs to the fitted model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Groups};
use crate::error::{usage, Result};
use crate::learners::linear::sigmoid;
use crate::learners::mlp::bce_from_logit;
use crate::learners::{
    binary_labels, forest::Forest, gini_of_counts, response, BatchLoss, FittedModel, ForestParams, Impurity, Mlp,
    MlpParams, NodeStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawlsianForestConfig {
    pub lambda: f64,
    pub minimax_weight: f64,
    pub average_weight: f64,
    pub min_group_size: usize,
}

impl Default for RawlsianForestConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            minimax_weight: 0.7,
            average_weight: 0.3,
            min_group_size: 20,
        }
    }
}

impl RawlsianForestConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(usage("lambda must lie in [0, 1]"));
        }
        if self.minimax_weight < 0.0
            || self.average_weight < 0.0
            || (self.minimax_weight + self.average_weight - 1.0).abs() > 1e-9
        {
            return Err(usage("minimax and average weights must be non-negative and sum to 1"));
        }
        Ok(())
    }
}

/// `(1 - lambda) * gini + lambda * (minimax * max_g I_g + average * mean_g I_g)`;
/// plain `gini` when `group_ginis` is empty.
pub fn rawlsian_impurity(gini: f64, group_ginis: &[f64], config: &RawlsianForestConfig) -> f64 {
    if group_ginis.is_empty() {
        return gini;
    }
    let max = group_ginis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = group_ginis.iter().sum::<f64>() / group_ginis.len() as f64;
    (1.0 - config.lambda) * gini + config.lambda * (config.minimax_weight * max + config.average_weight * mean)
}

/// Tree impurity built on [`rawlsian_impurity`]. Only groups with at least
/// `min_group_size` members at the node contribute.
#[derive(Debug, Clone, Copy)]
pub struct RawlsianImpurity {
    pub config: RawlsianForestConfig,
}

impl Impurity for RawlsianImpurity {
    fn impurity(&self, stats: &NodeStats) -> f64 {
        let gini = gini_of_counts(&stats.class_counts);
        let min = self.config.min_group_size as f64;
        let group_ginis: Vec<f64> = stats
            .group_counts
            .iter()
            .zip(&stats.group_class_counts)
            .filter(|(&n, _)| n >= min && n > 0.0)
            .map(|(_, counts)| gini_of_counts(counts))
            .collect();
        rawlsian_impurity(gini, &group_ginis, &self.config)
    }

    fn uses_groups(&self) -> bool {
        true
    }
}

fn check_groups(ds: &Dataset, groups: &Groups) -> Result<()> {
    if groups.n_groups() == 0 {
        return Err(usage("group-aware training needs sensitive groups"));
    }
    if groups.n_samples() != ds.n_rows() {
        return Err(usage(format!(
            "group membership covers {} rows but the dataset has {}",
            groups.n_samples(),
            ds.n_rows()
        )));
    }
    Ok(())
}

/// Forest whose splits minimise [`RawlsianImpurity`]. Splits use the
/// features only; `groups` enter the impurity.
pub fn rawlsian_forest_fit(
    ds: &Dataset,
    groups: &Groups,
    params: &ForestParams,
    config: &RawlsianForestConfig,
) -> Result<FittedModel> {
    config.validate()?;
    ds.validate()?;
    ds.class_labels()?;
    check_groups(ds, groups)?;
    let params = ForestParams {
        impurity: Some(Arc::new(RawlsianImpurity { config: *config })),
        ..params.clone()
    };
    Forest::fit(&ds.features, response(ds)?, Some(groups), None, &params).map(FittedModel::Forest)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawlsianLossConfig {
    pub lambda: f64,
    pub minimax_weight: f64,
    pub average_weight: f64,
    pub variance_weight: f64,
    pub min_group_size: usize,
}

impl Default for RawlsianLossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            minimax_weight: 0.5,
            average_weight: 0.3,
            variance_weight: 0.2,
            min_group_size: 20,
        }
    }
}

impl RawlsianLossConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(usage("lambda must lie in [0, 1]"));
        }
        let w = [self.minimax_weight, self.average_weight, self.variance_weight];
        if w.iter().any(|&v| v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(usage("minimax, average and variance weights must be non-negative and sum to 1"));
        }
        Ok(())
    }

    /// `minimax * max + average * mean + variance * popvar` of the group losses.
    pub fn psi(&self, group_losses: &[f64]) -> f64 {
        let g = group_losses.len() as f64;
        let max = group_losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = group_losses.iter().sum::<f64>() / g;
        let var = group_losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / g;
        self.minimax_weight * max + self.average_weight * mean + self.variance_weight * var
    }
}

/// `lambda * psi(group_losses) + (1 - lambda) * bce`; just `bce` without groups.
pub fn rawlsian_objective(group_losses: &[f64], bce: f64, config: &RawlsianLossConfig) -> f64 {
    if group_losses.is_empty() {
        return bce;
    }
    config.lambda * config.psi(group_losses) + (1.0 - config.lambda) * bce
}

/// Batch loss for [`rawlsian_mlp_fit`]. `groups` index the training rows;
/// a group counts in a batch when it has `min_group_size` members there.
#[derive(Debug, Clone)]
pub struct RawlsianLoss {
    pub config: RawlsianLossConfig,
    pub groups: Groups,
}

impl BatchLoss for RawlsianLoss {
    fn loss_and_grad(&self, logits: &[f64], labels: &[f64], rows: &[usize]) -> (f64, Vec<f64>) {
        let n = logits.len() as f64;
        let per_sample: Vec<f64> = logits.iter().zip(labels).map(|(&z, &y)| bce_from_logit(z, y)).collect();
        let bce = per_sample.iter().sum::<f64>() / n;
        let base: Vec<f64> = logits.iter().zip(labels).map(|(&z, &y)| (sigmoid(z) - y) / n).collect();

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.groups.n_groups()];
        for (pos, &row) in rows.iter().enumerate() {
            for &g in self.groups.of(row) {
                members[g].push(pos);
            }
        }
        members.retain(|m| !m.is_empty() && m.len() >= self.config.min_group_size);
        if members.is_empty() {
            return (bce, base);
        }

        let losses: Vec<f64> = members
            .iter()
            .map(|m| m.iter().map(|&p| per_sample[p]).sum::<f64>() / m.len() as f64)
            .collect();
        let value = rawlsian_objective(&losses, bce, &self.config);

        // d psi / d L_g, with the max routed to the first maximiser.
        let k = losses.len() as f64;
        let mean = losses.iter().sum::<f64>() / k;
        let top = losses
            .iter()
            .enumerate()
            .fold(0, |best, (g, &l)| if l > losses[best] { g } else { best });
        let mut group_part = vec![0.0; logits.len()];
        for (g, m) in members.iter().enumerate() {
            let mut w = self.config.average_weight / k + self.config.variance_weight * 2.0 * (losses[g] - mean) / k;
            if g == top {
                w += self.config.minimax_weight;
            }
            let scale = w / m.len() as f64;
            for &p in m {
                group_part[p] += scale * (sigmoid(logits[p]) - labels[p]);
            }
        }
        let lambda = self.config.lambda;
        let grad = base
            .iter()
            .zip(&group_part)
            .map(|(&b, &q)| (1.0 - lambda) * b + lambda * q)
            .collect();
        (value, grad)
    }
}

/// Network trained on the group-decomposed loss. Forward passes see the
/// features only.
pub fn rawlsian_mlp_fit(
    ds: &Dataset,
    groups: &Groups,
    params: &MlpParams,
    config: &RawlsianLossConfig,
) -> Result<FittedModel> {
    config.validate()?;
    ds.validate()?;
    check_groups(ds, groups)?;
    let y = binary_labels(ds)?;
    let params = MlpParams {
        loss: Some(Arc::new(RawlsianLoss {
            config: *config,
            groups: groups.clone(),
        })),
        ..params.clone()
    };
    Mlp::train(&ds.features, &y, &params).map(FittedModel::Mlp)
}

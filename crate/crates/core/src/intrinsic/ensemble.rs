//! Per-environment experts combined by a meta-regressor that also sees the
//! environment id.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target};
use crate::error::{data, usage, Result};
use crate::learners::{fit_forest, fit_linear, FittedModel, ForestParams};

/// Learner family shared by the experts and the meta-model.
#[derive(Debug, Clone)]
pub enum Family {
    Forest(ForestParams),
    Linear,
}

impl Family {
    fn fit(&self, ds: &Dataset) -> Result<FittedModel> {
        match self {
            Family::Forest(p) => fit_forest(ds, p),
            Family::Linear => fit_linear(ds),
        }
    }
}

/// Experts `g_e`, one per training environment, and the meta-model
/// `h(g_0(x), .., g_k(x), e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvEnsemble {
    pub train_envs: Vec<u8>,
    pub experts: Vec<FittedModel>,
    pub meta: FittedModel,
}

fn meta_inputs(experts: &[FittedModel], x: &Array2<f64>, envs: &[u8]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), experts.len() + 1));
    for (j, expert) in experts.iter().enumerate() {
        for (i, v) in expert.predict_values(x)?.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    let last = experts.len();
    for (i, &e) in envs.iter().enumerate() {
        out[[i, last]] = f64::from(e);
    }
    Ok(out)
}

impl EnvEnsemble {
    /// Predictions for rows of `x` drawn from environments `envs`.
    pub fn predict(&self, x: &Array2<f64>, envs: &[u8]) -> Result<Vec<f64>> {
        if envs.len() != x.nrows() {
            return Err(usage("one environment id is needed per row"));
        }
        self.meta.predict_values(&meta_inputs(&self.experts, x, envs)?)
    }

    /// Width of the meta-model input: one column per expert plus the id.
    pub fn meta_width(&self) -> usize {
        self.meta.n_features()
    }
}

/// Fits one expert per environment in `train_envs`, then the meta-model on
/// the pooled training rows with their true environment ids.
pub fn env_ensemble_fit(ds: &Dataset, train_envs: &[u8], family: &Family) -> Result<EnvEnsemble> {
    ds.validate()?;
    let mut envs_sorted = train_envs.to_vec();
    envs_sorted.sort_unstable();
    envs_sorted.dedup();
    if envs_sorted.len() < 2 {
        return Err(usage("the environment ensemble needs at least two training environments"));
    }
    let env = ds
        .environment
        .as_deref()
        .ok_or_else(|| data("dataset has no environment column"))?;
    let y = ds.real_targets()?;

    let mut experts = Vec::with_capacity(envs_sorted.len());
    for &e in &envs_sorted {
        let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| env[i] == e).collect();
        if rows.is_empty() {
            return Err(data(format!("no training rows for environment {e}")));
        }
        experts.push(family.fit(&ds.select(&rows))?);
    }
    let pooled: Vec<usize> = (0..ds.n_rows()).filter(|&i| envs_sorted.contains(&env[i])).collect();
    let sub = ds.select(&pooled);
    let meta_x = meta_inputs(&experts, &sub.features, sub.environment.as_deref().unwrap_or_default())?;
    let meta_ds = Dataset::new(meta_x, Some(Target::Real(pooled.iter().map(|&i| y[i]).collect())));
    let meta = family.fit(&meta_ds)?;
    Ok(EnvEnsemble {
        train_envs: envs_sorted,
        experts,
        meta,
    })
}

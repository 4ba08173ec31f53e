use std::sync::Arc;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Gini, Impurity, Response, Tree, TreeBuilder, Variance};
use super::Task;
use crate::data::Groups;
use crate::error::{data, usage, Result};

/// Bagged-tree hyperparameters. `impurity: None` picks Gini for
/// classification and variance for regression.
#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub impurity: Option<Arc<dyn Impurity>>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            seed: 42,
            impurity: None,
        }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(usage("n_trees must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(usage("max_depth must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub task: Task,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Fits one tree per bootstrap sample. `weights`, when given, turn the
    /// bootstrap into a weighted draw; `groups` are only consulted by
    /// group-aware impurities.
    pub(crate) fn fit(
        x: &Array2<f64>,
        y: Response<'_>,
        groups: Option<&Groups>,
        weights: Option<&[f64]>,
        params: &ForestParams,
    ) -> Result<Forest> {
        Self::fit_bagged(x, y, groups, weights, params).map(|(forest, _)| forest)
    }

    /// As [`Forest::fit`], also returning each training row's out-of-bag
    /// mean leaf value. Rows drawn by every bootstrap fall back to the full
    /// forest mean.
    pub(crate) fn fit_with_oob(
        x: &Array2<f64>,
        y: Response<'_>,
        weights: Option<&[f64]>,
        params: &ForestParams,
    ) -> Result<(Forest, Array2<f64>)> {
        let (forest, bags) = Self::fit_bagged(x, y, None, weights, params)?;
        let full = forest.leaf_means(x);
        let mut out = Array2::zeros(full.raw_dim());
        for (i, row) in x.rows().into_iter().enumerate() {
            let mut count = 0usize;
            for (tree, bag) in forest.trees.iter().zip(&bags) {
                if !bag[i] {
                    count += 1;
                    for (c, v) in tree.leaf_value(row).iter().enumerate() {
                        out[[i, c]] += v;
                    }
                }
            }
            if count == 0 {
                out.row_mut(i).assign(&full.row(i));
            } else {
                out.row_mut(i).mapv_inplace(|v| v / count as f64);
            }
        }
        Ok((forest, out))
    }

    fn fit_bagged(
        x: &Array2<f64>,
        y: Response<'_>,
        groups: Option<&Groups>,
        weights: Option<&[f64]>,
        params: &ForestParams,
    ) -> Result<(Forest, Vec<Vec<bool>>)> {
        params.validate()?;
        let (n, d) = x.dim();
        if n == 0 {
            return Err(data("cannot fit a forest on an empty dataset"));
        }
        if groups.is_some_and(|g| g.n_samples() != n) {
            return Err(usage("group membership does not match the training rows"));
        }
        let (task, default_impurity, max_features): (Task, Arc<dyn Impurity>, usize) = match y {
            Response::Class { n_classes, .. } => (
                Task::Classification { n_classes },
                Arc::new(Gini),
                ((d as f64).sqrt().ceil() as usize).max(1),
            ),
            Response::Real(_) => (Task::Regression, Arc::new(Variance), d.div_ceil(3).max(1)),
        };
        let impurity = params.impurity.clone().unwrap_or(default_impurity);
        let sampler = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(usage("sample weights do not match the training rows"));
                }
                Some(WeightedIndex::new(w).map_err(|e| usage(format!("invalid sample weights: {e}")))?)
            }
            None => None,
        };
        let builder = TreeBuilder {
            x,
            y,
            groups,
            impurity: impurity.as_ref(),
            max_depth: params.max_depth,
            max_features,
        };
        let mut master = ChaCha8Rng::seed_from_u64(params.seed);
        let mut bags = Vec::with_capacity(params.n_trees);
        let trees = (0..params.n_trees)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
                let rows: Vec<usize> = match &sampler {
                    Some(s) => (0..n).map(|_| s.sample(&mut rng)).collect(),
                    None => (0..n).map(|_| rng.random_range(0..n)).collect(),
                };
                let mut bag = vec![false; n];
                for &r in &rows {
                    bag[r] = true;
                }
                bags.push(bag);
                builder.build(rows, &mut rng)
            })
            .collect();
        let forest = Forest {
            task,
            n_features: d,
            trees,
        };
        Ok((forest, bags))
    }

    /// Mean of the per-tree leaf values for every row.
    pub fn leaf_means(&self, x: &Array2<f64>) -> Array2<f64> {
        let width = match self.task {
            Task::Classification { n_classes } => n_classes,
            Task::Regression => 1,
        };
        let mut out = Array2::zeros((x.nrows(), width));
        let scale = 1.0 / self.trees.len() as f64;
        for (i, row) in x.rows().into_iter().enumerate() {
            for tree in &self.trees {
                for (c, v) in tree.leaf_value(row).iter().enumerate() {
                    out[[i, c]] += v;
                }
            }
            out.row_mut(i).mapv_inplace(|v| v * scale);
        }
        out
    }
}

//! Baseline learners: bagged trees, linear/logistic models and a small
//! feedforward classifier, behind one immutable [`FittedModel`].

pub mod forest;
pub mod linear;
pub mod mlp;
pub mod tree;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use forest::{Forest, ForestParams};
pub use linear::{LeastSquares, Logistic, ScorePenalty};
pub use mlp::{BatchLoss, MeanBce, Mlp, MlpParams};
pub use tree::{gini_of_counts, Gini, Impurity, NodeStats, Variance};

use crate::constraints::ConstraintSet;
use crate::data::Dataset;
use crate::error::{data, usage, Result};
use crate::scores::ClassScores;
use tree::Response;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

/// A trained predictor. Immutable once fitted and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Forest(Forest),
    LeastSquares(LeastSquares),
    Logistic(Logistic),
    Mlp(Mlp),
    /// Inner classifier whose scores always pass through the logic layer.
    LogicWrapped {
        inner: Box<FittedModel>,
        constraints: ConstraintSet,
    },
}

/// Output of [`FittedModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

/// JSON envelope written by `--save-model`.
#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    format_version: u32,
    model: FittedModel,
}

const MODEL_FORMAT_VERSION: u32 = 1;

impl FittedModel {
    pub fn task(&self) -> Task {
        match self {
            FittedModel::Forest(f) => f.task,
            FittedModel::LeastSquares(_) => Task::Regression,
            FittedModel::Logistic(l) => Task::Classification {
                n_classes: l.n_classes,
            },
            FittedModel::Mlp(_) => Task::Classification { n_classes: 2 },
            FittedModel::LogicWrapped { inner, .. } => inner.task(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Forest(f) => f.n_features,
            FittedModel::LeastSquares(l) => l.coefficients.len(),
            FittedModel::Logistic(l) => l.weights.nrows() - 1,
            FittedModel::Mlp(m) => m.n_features,
            FittedModel::LogicWrapped { inner, .. } => inner.n_features(),
        }
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(usage(format!(
                "model expects {} feature columns, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Per-class scores of a classification model.
    pub fn class_scores(&self, x: &Array2<f64>) -> Result<ClassScores> {
        self.check_width(x)?;
        let table = match self {
            FittedModel::Forest(f) if matches!(f.task, Task::Classification { .. }) => f.leaf_means(x),
            FittedModel::Logistic(l) => l.class_scores(x),
            FittedModel::Mlp(m) => {
                let p = m.predict_proba(x);
                Array2::from_shape_fn((p.len(), 2), |(i, c)| if c == 1 { p[i] } else { 1.0 - p[i] })
            }
            FittedModel::LogicWrapped { inner, constraints } => {
                let base = inner.class_scores(x)?;
                return crate::intrinsic::logic_layer(&base, constraints);
            }
            _ => return Err(usage("class scores requested from a regression model")),
        };
        // Summation can overshoot [0, 1] by an ulp.
        Ok(ClassScores::from_table_unchecked(table.mapv(|p| p.clamp(0.0, 1.0))))
    }

    /// Point predictions of a regression model.
    pub fn predict_values(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_width(x)?;
        match self {
            FittedModel::Forest(f) if f.task == Task::Regression => Ok(f.leaf_means(x).column(0).to_vec()),
            FittedModel::LeastSquares(l) => Ok(l.predict(x)),
            _ => Err(usage("point predictions requested from a classification model")),
        }
    }

    /// Argmax of the class scores, ties toward the lower class index.
    pub fn predict_classes(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(self.class_scores(x)?.argmax())
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Prediction> {
        match self.task() {
            Task::Classification { .. } => self.predict_classes(x).map(Prediction::Classes),
            Task::Regression => self.predict_values(x).map(Prediction::Values),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SavedModel {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let saved: SavedModel = serde_json::from_str(s)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(data(format!("unsupported model format version {}", saved.format_version)));
        }
        Ok(saved.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub(crate) fn response(ds: &Dataset) -> Result<Response<'_>> {
    match &ds.target {
        Some(crate::data::Target::Class { labels, n_classes }) => Ok(Response::Class {
            labels,
            n_classes: *n_classes,
        }),
        Some(crate::data::Target::Real(y)) => Ok(Response::Real(y)),
        None => Err(data("dataset has no labels")),
    }
}

/// Bagged trees on bootstrap samples; classification when the dataset has
/// class labels, regression when it has real outcomes.
pub fn fit_forest(ds: &Dataset, params: &ForestParams) -> Result<FittedModel> {
    ds.validate()?;
    Forest::fit(&ds.features, response(ds)?, None, None, params).map(FittedModel::Forest)
}

/// Least squares for real outcomes, logistic regression for class labels.
pub fn fit_linear(ds: &Dataset) -> Result<FittedModel> {
    ds.validate()?;
    if ds.is_empty() {
        return Err(data("cannot fit a linear model on an empty dataset"));
    }
    match response(ds)? {
        Response::Real(y) => LeastSquares::fit(&ds.features, y).map(FittedModel::LeastSquares),
        Response::Class { labels, n_classes } => {
            Logistic::fit(&ds.features, labels, n_classes).map(FittedModel::Logistic)
        }
    }
}

/// 0/1 labels as floats, rejecting anything that is not a binary task.
pub(crate) fn binary_labels(ds: &Dataset) -> Result<Vec<f64>> {
    let (labels, n_classes) = ds
        .class_labels()
        .map_err(|_| usage("the network classifier needs binary class labels"))?;
    if n_classes > 2 || labels.iter().any(|&c| c > 1) {
        return Err(usage(format!("the network classifier needs binary labels, got {n_classes} classes")));
    }
    Ok(labels.iter().map(|&c| c as f64).collect())
}

/// Trains the feedforward classifier on binary labels.
pub fn fit_mlp(ds: &Dataset, params: &MlpParams) -> Result<FittedModel> {
    ds.validate()?;
    let y = binary_labels(ds)?;
    Mlp::train(&ds.features, &y, params).map(FittedModel::Mlp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Target;
    use ndarray::array;

    fn separable() -> Dataset {
        let x = Array2::from_shape_fn((100, 2), |(i, j)| {
            let base = if i < 50 { -1.0 } else { 1.0 };
            base * (1.0 + (i % 7) as f64 * 0.1) + j as f64 * ((i % 5) as f64 - 2.0) * 0.3
        });
        let labels = (0..100).map(|i| usize::from(i >= 50)).collect();
        Dataset::new(x, Some(Target::Class { labels, n_classes: 2 }))
    }

    #[test]
    fn forest_fits_separable_data() {
        let ds = separable();
        let m = fit_forest(&ds, &ForestParams::default()).unwrap();
        let pred = m.predict_classes(&ds.features).unwrap();
        assert_eq!(pred, ds.class_labels().unwrap().0);
    }

    #[test]
    fn forest_single_class_is_constant() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0]], Some(Target::Class { labels: vec![0; 3], n_classes: 1 }));
        let m = fit_forest(&ds, &ForestParams::default()).unwrap();
        let s = m.class_scores(&array![[5.0], [-3.0]]).unwrap();
        assert!(s.table().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn forest_is_deterministic() {
        let ds = separable();
        let p = ForestParams {
            n_trees: 10,
            ..ForestParams::with_seed(3)
        };
        assert_eq!(fit_forest(&ds, &p).unwrap(), fit_forest(&ds, &p).unwrap());
    }

    #[test]
    fn empty_data_is_a_data_error() {
        let mut ds = Dataset::empty(2);
        ds.target = Some(Target::Real(vec![]));
        assert!(matches!(fit_forest(&ds, &ForestParams::default()), Err(crate::Error::Data(_))));
        assert!(matches!(fit_linear(&ds), Err(crate::Error::Data(_))));
    }

    #[test]
    fn width_mismatch_is_usage_error() {
        let ds = separable();
        let m = fit_linear(&ds).unwrap();
        assert!(matches!(m.class_scores(&array![[1.0]]), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn mlp_rejects_multiclass() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0]], Some(Target::Class { labels: vec![0, 1, 2], n_classes: 3 }));
        assert!(matches!(fit_mlp(&ds, &MlpParams::default()), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let ds = separable();
        let m = fit_forest(&ds, &ForestParams { n_trees: 3, ..ForestParams::default() }).unwrap();
        let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}

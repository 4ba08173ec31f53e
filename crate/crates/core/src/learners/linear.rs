//! Least squares and full-batch logistic / softmax regression.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{data, Result};

/// Design matrix with a leading column of ones.
fn with_intercept(x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::ones((x.nrows(), x.ncols() + 1));
    out.slice_mut(ndarray::s![.., 1..]).assign(x);
    out
}

/// Solves the symmetric system `a w = b` by Gaussian elimination with
/// partial pivoting. Directions with a vanishing pivot get coefficient 0.
fn solve_normal_equations(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let p = b.len();
    let scale = a.diag().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut active = vec![true; p];
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .expect("non-empty range");
        if a[[pivot, col]].abs() <= 1e-12 * scale {
            active[col] = false;
            continue;
        }
        if pivot != col {
            for k in 0..p {
                a.swap([pivot, k], [col, k]);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..p {
            let f = a[[row, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..p {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut w = Array1::zeros(p);
    for col in (0..p).rev() {
        if !active[col] {
            continue;
        }
        let mut acc = b[col];
        for k in col + 1..p {
            acc -= a[[col, k]] * w[k];
        }
        w[col] = acc / a[[col, col]];
    }
    w
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LeastSquares {
    pub fn fit(x: &Array2<f64>, y: &[f64]) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(data("cannot fit least squares on an empty dataset"));
        }
        let design = with_intercept(x);
        let yv = Array1::from(y.to_vec());
        let w = solve_normal_equations(design.t().dot(&design), design.t().dot(&yv));
        Ok(Self {
            intercept: w[0],
            coefficients: w.iter().skip(1).copied().collect(),
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Extra differentiable term on the class-score vector of each sample, added
/// to the mean cross-entropy with weight `lambda` (averaged over samples).
pub trait ScorePenalty {
    /// Penalty of one score row; writes d(penalty)/d(score) into `grad`.
    fn value_and_grad(&self, scores: &[f64], grad: &mut [f64]) -> f64;
}

pub const LOGISTIC_TOLERANCE: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 10_000;

/// Logistic regression (sigmoid for two classes, softmax otherwise), or a
/// constant class prior when training labels hold a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub n_classes: usize,
    /// `(d + 1) x m` with the intercept in row 0; `m = 1` for two classes.
    pub weights: Array2<f64>,
    pub prior: Option<Vec<f64>>,
    pub iterations: usize,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Logistic {
    pub fn fit(x: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<Self> {
        Self::fit_penalized(x, labels, n_classes, None)
    }

    /// Full-batch gradient descent on mean cross-entropy plus
    /// `lambda * mean(penalty)`, stopping once the loss changes by less than
    /// [`LOGISTIC_TOLERANCE`].
    pub fn fit_penalized(
        x: &Array2<f64>,
        labels: &[usize],
        n_classes: usize,
        penalty: Option<(&dyn ScorePenalty, f64)>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(data("cannot fit logistic regression on an empty dataset"));
        }
        let k = n_classes.max(1);
        let mut counts = vec![0.0; k];
        for &c in labels {
            counts[c] += 1.0;
        }
        let outputs = if k <= 2 { 1 } else { k };
        let design = with_intercept(x);
        let p = design.ncols();
        if counts.iter().filter(|&&c| c > 0.0).count() <= 1 {
            return Ok(Self {
                n_classes: k,
                weights: Array2::zeros((p, outputs)),
                prior: Some(counts.iter().map(|c| c / n as f64).collect()),
                iterations: 0,
            });
        }
        let max_row_norm = design.rows().into_iter().map(|r| r.dot(&r)).fold(0.0, f64::max);
        let curvature = if outputs == 1 { 0.25 } else { 0.5 };
        let lr = 1.0 / (curvature * max_row_norm);

        let mut w = Array2::zeros((p, outputs));
        let mut previous = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..LOGISTIC_MAX_ITER {
            iterations = it + 1;
            let z = design.dot(&w);
            let (loss, dz) = Self::loss_and_grad(&z, labels, k, penalty);
            let grad = design.t().dot(&dz);
            w.scaled_add(-lr, &grad);
            if (previous - loss).abs() < LOGISTIC_TOLERANCE {
                break;
            }
            previous = loss;
        }
        Ok(Self {
            n_classes: k,
            weights: w,
            prior: None,
            iterations,
        })
    }

    fn loss_and_grad(
        z: &Array2<f64>,
        labels: &[usize],
        k: usize,
        penalty: Option<(&dyn ScorePenalty, f64)>,
    ) -> (f64, Array2<f64>) {
        let n = z.nrows() as f64;
        let mut dz = Array2::zeros(z.raw_dim());
        let mut loss = 0.0;
        let mut scores = vec![0.0; k];
        let mut pgrad = vec![0.0; k];
        for (i, row) in z.rows().into_iter().enumerate() {
            let y = labels[i];
            if z.ncols() == 1 {
                let zi = row[0];
                let prob = sigmoid(zi);
                loss += softplus(zi) - if y == 1 { zi } else { 0.0 };
                dz[[i, 0]] = (prob - y as f64) / n;
                if let Some((pen, lambda)) = penalty {
                    scores[0] = 1.0 - prob;
                    scores[1] = prob;
                    pgrad.fill(0.0);
                    loss += lambda * pen.value_and_grad(&scores, &mut pgrad);
                    dz[[i, 0]] += lambda * (pgrad[1] - pgrad[0]) * prob * (1.0 - prob) / n;
                }
            } else {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for c in 0..k {
                    scores[c] = (row[c] - lse).exp();
                    dz[[i, c]] = (scores[c] - f64::from(u8::from(c == y))) / n;
                }
                loss += lse - row[y];
                if let Some((pen, lambda)) = penalty {
                    pgrad.fill(0.0);
                    loss += lambda * pen.value_and_grad(&scores, &mut pgrad);
                    let inner: f64 = (0..k).map(|j| pgrad[j] * scores[j]).sum();
                    for c in 0..k {
                        dz[[i, c]] += lambda * scores[c] * (pgrad[c] - inner) / n;
                    }
                }
            }
        }
        (loss / n, dz)
    }

    /// Class probabilities, rows summing to one.
    pub fn class_scores(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows();
        if let Some(prior) = &self.prior {
            let row = Array1::from(prior.clone());
            return row.broadcast((n, prior.len())).expect("broadcast prior").to_owned();
        }
        let z = with_intercept(x).dot(&self.weights);
        if z.ncols() == 1 {
            let mut out = Array2::zeros((n, 2));
            for i in 0..n {
                let p = sigmoid(z[[i, 0]]);
                out[[i, 0]] = 1.0 - p;
                out[[i, 1]] = p;
            }
            out
        } else {
            let mut out = z;
            for mut row in out.axis_iter_mut(Axis(0)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let total = row.sum();
                row.mapv_inplace(|v| v / total);
            }
            out
        }
    }

    /// Linear score `w . [1, x]` of the positive class (two-class models).
    pub fn decision_function(&self, x: &Array2<f64>) -> Vec<f64> {
        with_intercept(x).dot(&self.weights).column(0).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_line() {
        let x = Array2::from_shape_fn((11, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..11).map(|i| 2.0 * i as f64).collect();
        let m = LeastSquares::fit(&x, &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
        assert!(m.intercept.abs() < 1e-9);
        assert!((m.predict(&array![[3.0]])[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn duplicated_rows_same_coefficients() {
        let x = array![[1.0, 2.0], [2.0, -1.0], [3.0, 0.0], [-1.0, 4.0], [0.0, 1.0]];
        let y = [3.0, 1.0, 4.0, 1.0, 5.0];
        let once = LeastSquares::fit(&x, &y).unwrap();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let twice = LeastSquares::fit(&x2, &y2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let m = LeastSquares::fit(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.coefficients[1], 0.0);
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_labels_give_prior() {
        let x = array![[0.0], [1.0], [2.0]];
        let m = Logistic::fit(&x, &[1, 1, 1], 2).unwrap();
        let s = m.class_scores(&x);
        assert_eq!(s.row(2).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn binary_column_one_is_sigmoid() {
        let x = array![[-2.0], [-1.0], [0.5], [1.0], [2.0], [-0.5]];
        let m = Logistic::fit(&x, &[0, 0, 1, 1, 1, 0], 2).unwrap();
        let s = m.class_scores(&x);
        for (i, z) in m.decision_function(&x).into_iter().enumerate() {
            assert_eq!(s[[i, 1]], sigmoid(z));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = array![[0.0, 0.1], [1.0, 0.0], [2.0, 1.0], [0.5, 2.0], [1.5, 1.5], [2.5, 0.2]];
        let m = Logistic::fit(&x, &[0, 1, 2, 0, 1, 2], 3).unwrap();
        for r in m.class_scores(&x).rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }
}

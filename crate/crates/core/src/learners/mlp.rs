//! Feedforward binary classifier: ReLU hidden layers with inverted dropout,
//! one sigmoid output, trained with Adam on a pluggable batch loss.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::distr::{Bernoulli, Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::{sigmoid, softplus};
use crate::error::{usage, Result};

/// Loss over a batch of output logits.
pub trait BatchLoss: fmt::Debug + Send + Sync {
    /// Returns the batch loss and its gradient with respect to each logit.
    /// `rows` are the training-set indices of the batch, aligned with
    /// `logits` and `labels`.
    fn loss_and_grad(&self, logits: &[f64], labels: &[f64], rows: &[usize]) -> (f64, Vec<f64>);
}

/// Per-sample binary cross-entropy computed from a logit.
pub fn bce_from_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

/// Mean binary cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanBce;

impl BatchLoss for MeanBce {
    fn loss_and_grad(&self, logits: &[f64], labels: &[f64], _rows: &[usize]) -> (f64, Vec<f64>) {
        let n = logits.len() as f64;
        let loss = logits.iter().zip(labels).map(|(&z, &y)| bce_from_logit(z, y)).sum::<f64>() / n;
        let grad = logits.iter().zip(labels).map(|(&z, &y)| (sigmoid(z) - y) / n).collect();
        (loss, grad)
    }
}

#[derive(Debug, Clone)]
pub struct MlpParams {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// `None` means [`MeanBce`].
    pub loss: Option<Arc<dyn BatchLoss>>,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            hidden_layers: 3,
            dropout_rate: 0.2,
            epochs: 100,
            learning_rate: 0.001,
            seed: 42,
            batch_size: None,
            loss: None,
        }
    }
}

impl MlpParams {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(usage(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(usage("learning_rate must be positive"));
        }
        if self.hidden_dim == 0 {
            return Err(usage("hidden_dim must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(usage("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_features: usize,
    pub dropout_rate: f64,
    pub layers: Vec<Dense>,
}

/// Per-layer parameter gradients, same shapes as [`Mlp::layers`].
pub type Gradients = Vec<(Array2<f64>, Array1<f64>)>;

struct Cache {
    /// Input to each layer (post-activation, post-dropout of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl Mlp {
    /// Seeded initialisation, uniform in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(n_features: usize, params: &MlpParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut dims = vec![n_features];
        dims.extend(std::iter::repeat_n(params.hidden_dim, params.hidden_layers));
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0].max(1) as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || u.sample(&mut rng)),
                    bias: Array1::from_shape_simple_fn(w[1], || u.sample(&mut rng)),
                }
            })
            .collect();
        Ok(Self {
            n_features,
            dropout_rate: params.dropout_rate,
            layers,
        })
    }

    /// Trains with Adam (beta1 0.9, beta2 0.999, eps 1e-8). Labels are 0/1.
    pub fn train(x: &Array2<f64>, labels: &[f64], params: &MlpParams) -> Result<Self> {
        let default_loss = MeanBce;
        let loss: &dyn BatchLoss = params.loss.as_deref().unwrap_or(&default_loss);
        let mut net = Self::init(x.ncols(), params)?;
        let n = x.nrows();
        if n == 0 || params.epochs == 0 {
            return Ok(net);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let mut adam = Adam::new(&net.layers, params.learning_rate);
        let batch = params.batch_size.unwrap_or(n).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..params.epochs {
            if batch < n {
                order.shuffle(&mut rng);
            }
            for rows in order.chunks(batch) {
                let xb = x.select(Axis(0), rows);
                let yb: Vec<f64> = rows.iter().map(|&i| labels[i]).collect();
                let masks = net.draw_masks(rows.len(), &mut rng);
                let (logits, cache) = net.forward_cached(&xb, masks);
                let (_, dlogits) = loss.loss_and_grad(&logits, &yb, rows);
                let grads = net.backward(&cache, &dlogits);
                adam.step(&mut net.layers, &grads);
            }
        }
        Ok(net)
    }

    fn draw_masks(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Option<Array2<f64>>> {
        let hidden = self.layers.len() - 1;
        if self.dropout_rate == 0.0 {
            return vec![None; hidden];
        }
        let keep = 1.0 - self.dropout_rate;
        let coin = Bernoulli::new(keep).expect("keep probability in (0, 1]");
        (0..hidden)
            .map(|l| {
                let width = self.layers[l].bias.len();
                Some(Array2::from_shape_simple_fn((n, width), || {
                    if coin.sample(rng) {
                        1.0 / keep
                    } else {
                        0.0
                    }
                }))
            })
            .collect()
    }

    fn forward_cached(&self, x: &Array2<f64>, masks: Vec<Option<Array2<f64>>>) -> (Vec<f64>, Cache) {
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = inputs[l].dot(&layer.weights) + &layer.bias;
            if l == last {
                let logits = z.column(0).to_vec();
                return (logits, Cache { inputs, pre, masks });
            }
            let mut a = z.mapv(|v| v.max(0.0));
            if let Some(m) = &masks[l] {
                a *= m;
            }
            pre.push(z);
            inputs.push(a);
        }
        unreachable!("network has an output layer")
    }

    fn backward(&self, cache: &Cache, dlogits: &[f64]) -> Gradients {
        let last = self.layers.len() - 1;
        let mut grads: Gradients = Vec::with_capacity(self.layers.len());
        let mut delta = Array2::from_shape_vec((dlogits.len(), 1), dlogits.to_vec()).expect("column");
        for l in (0..=last).rev() {
            let gw = cache.inputs[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            if l == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[l].weights.t());
            if let Some(m) = &cache.masks[l - 1] {
                upstream *= m;
            }
            upstream.zip_mut_with(&cache.pre[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = upstream;
        }
        grads.reverse();
        grads
    }

    /// Output logits with dropout disabled.
    pub fn logits(&self, x: &Array2<f64>) -> Vec<f64> {
        let masks = vec![None; self.layers.len() - 1];
        self.forward_cached(x, masks).0
    }

    /// Positive-class probabilities.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    /// Loss and analytic parameter gradient on `x` with dropout disabled.
    pub fn loss_and_gradient(&self, x: &Array2<f64>, labels: &[f64], loss: &dyn BatchLoss) -> (f64, Gradients) {
        let masks = vec![None; self.layers.len() - 1];
        let (logits, cache) = self.forward_cached(x, masks);
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let (value, dlogits) = loss.loss_and_grad(&logits, labels, &rows);
        (value, self.backward(&cache, &dlogits))
    }

    /// All parameters in layer order (weights row-major, then bias).
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("parameter vector length");
            }
        }
    }

    pub fn flatten_gradients(grads: &Gradients) -> Vec<f64> {
        grads
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(layers: &[Dense], lr: f64) -> Self {
        let zeros: Gradients = layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            lr,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let lr = self.lr;
        for (l, layer) in layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_is_initialisation() {
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i + j) as f64 * 0.1);
        let params = MlpParams {
            epochs: 0,
            ..MlpParams::default()
        };
        let a = Mlp::train(&x, &[0.0, 1.0, 0.0, 1.0, 1.0], &params).unwrap();
        let b = Mlp::init(2, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explicit_bce_matches_default() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
        let base = MlpParams {
            hidden_dim: 8,
            epochs: 5,
            ..MlpParams::default()
        };
        let explicit = MlpParams {
            loss: Some(Arc::new(MeanBce)),
            ..base.clone()
        };
        assert_eq!(Mlp::train(&x, &y, &base).unwrap(), Mlp::train(&x, &y, &explicit).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        let bad = MlpParams {
            dropout_rate: 1.0,
            ..MlpParams::default()
        };
        assert!(Mlp::init(2, &bad).is_err());
    }
}

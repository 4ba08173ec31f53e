//! Seeded synthetic generators for each experiment.
//!
//! Every generator is a pure function of its arguments. Features are
//! standardised to zero mean and unit (population) variance after sampling.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::data::{Dataset, GroupKey, SensitiveColumn, Target};
use crate::error::{usage, Result};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn std_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Centres and scales every column in place; constant columns are only centred.
fn standardize(x: &mut Array2<f64>) {
    if x.nrows() == 0 {
        return;
    }
    for mut col in x.axis_iter_mut(Axis(1)) {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / scale);
    }
}

/// Two Gaussian clusters (class 0 around `(-1.5, 0)`, class 1 around
/// `(1.5, 0)`) plus an `ambiguous_frac` share of points near the origin with
/// coin-flip labels.
pub fn gen_exclusion_dataset(seed: u64, n: usize, ambiguous_frac: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&ambiguous_frac) {
        return Err(usage(format!("ambiguous_frac must lie in [0, 1], got {ambiguous_frac}")));
    }
    let mut r = rng(seed);
    let z = std_normal();
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = usize::from(r.random_bool(0.5));
        if r.random_bool(ambiguous_frac) {
            x[[i, 0]] = 0.5 * z.sample(&mut r);
            x[[i, 1]] = 0.5 * z.sample(&mut r);
        } else {
            let centre = if class == 0 { -1.5 } else { 1.5 };
            x[[i, 0]] = centre + z.sample(&mut r);
            x[[i, 1]] = z.sample(&mut r);
        }
        labels.push(class);
    }
    standardize(&mut x);
    Ok(Dataset::new(x, Some(Target::Class { labels, n_classes: 2 })))
}

/// Label mix `[P(0), P(1), P(2)]` inside each severity region.
const HIERARCHY_LABEL_MIX: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.4, 0.6, 0.0], [0.2, 0.35, 0.45]];

/// Three ordered severity classes. A severity score along a fixed direction
/// in the plane defines nested regions: everything is at least class 0,
/// `s > -0.3` is the class-1 region and `s > 0.8` the class-2 region. Labels
/// inside a region are drawn from its mix, so severe cases also carry the
/// milder labels they imply.
pub fn gen_hierarchy_dataset(seed: u64, n: usize) -> Result<Dataset> {
    let mut r = rng(seed);
    let z = std_normal();
    let mixes: Vec<WeightedIndex<f64>> = HIERARCHY_LABEL_MIX
        .iter()
        .map(|m| WeightedIndex::new(m).expect("valid mix"))
        .collect();
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (z.sample(&mut r), z.sample(&mut r));
        x[[i, 0]] = a;
        x[[i, 1]] = b;
        let s = (a + 0.5 * b) / 1.25f64.sqrt();
        let region = if s > 0.8 {
            2
        } else if s > -0.3 {
            1
        } else {
            0
        };
        labels.push(mixes[region].sample(&mut r));
    }
    standardize(&mut x);
    Ok(Dataset::new(x, Some(Target::Class { labels, n_classes: 3 })))
}

/// Covariates `x` in R^3 (age, severity, comorbidity), a treatment in
/// `{0, 1, 2}` drawn with probabilities `(0.25, 0.5, 0.25)` and the outcome
/// `1.5 x0 - x1 + 0.5 x2 + t (1 + 0.8 x1) + N(0, 0.5^2)`.
pub fn gen_treatment_dataset(seed: u64, n: usize) -> Result<Dataset> {
    let mut r = rng(seed);
    let z = std_normal();
    let arms = WeightedIndex::new([1, 2, 1]).expect("positive weights");
    let mut x = Array2::zeros((n, 3));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..3 {
            x[[i, j]] = z.sample(&mut r);
        }
        let arm = arms.sample(&mut r) as u8;
        let tf = f64::from(arm);
        y.push(1.5 * x[[i, 0]] - x[[i, 1]] + 0.5 * x[[i, 2]] + tf * (1.0 + 0.8 * x[[i, 1]]) + 0.5 * z.sample(&mut r));
        t.push(arm);
    }
    standardize(&mut x);
    let mut ds = Dataset::new(x, Some(Target::Real(y)));
    ds.treatment = Some(t);
    Ok(ds)
}

/// Number of environments produced by [`gen_environment_dataset`].
pub const N_ENVIRONMENTS: u8 = 4;

/// Four environments of `n_per_env` rows each. All share
/// `y = 2 x0 - x1 + 0.5 x2 + N(0, 1)`; environment `e` adds the shift
/// `1.5 e` and the slope perturbation `0.5 e x0`.
pub fn gen_environment_dataset(seed: u64, n_per_env: usize) -> Result<Dataset> {
    let mut r = rng(seed);
    let z = std_normal();
    let n = n_per_env * N_ENVIRONMENTS as usize;
    let mut x = Array2::zeros((n, 3));
    let mut env = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let e = (i / n_per_env.max(1)) as u8;
        for j in 0..3 {
            x[[i, j]] = z.sample(&mut r);
        }
        let ef = f64::from(e);
        y.push(
            2.0 * x[[i, 0]] - x[[i, 1]] + 0.5 * x[[i, 2]] + 1.5 * ef + 0.5 * ef * x[[i, 0]] + z.sample(&mut r),
        );
        env.push(e);
    }
    standardize(&mut x);
    let mut ds = Dataset::new(x, Some(Target::Real(y)));
    ds.environment = Some(env);
    Ok(ds)
}

/// Penalties subtracted from the latent hiring score of members of each
/// group, in standard deviations of the unpenalised score. Absent groups get 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSpec {
    pub penalties: BTreeMap<GroupKey, f64>,
}

impl Default for BiasSpec {
    fn default() -> Self {
        let penalties = [
            ("gender", "female", 0.5),
            ("gender", "nonbinary", 0.8),
            ("ethnicity", "D", 0.8),
            ("ethnicity", "C", 0.3),
            ("ses", "low", 0.5),
        ]
        .into_iter()
        .map(|(f, v, d)| (GroupKey::new(f, v), d))
        .collect();
        Self { penalties }
    }
}

impl BiasSpec {
    /// No penalties at all.
    pub fn none() -> Self {
        Self {
            penalties: BTreeMap::new(),
        }
    }

    pub fn penalty(&self, feature: &str, value: &str) -> f64 {
        self.penalties.get(&GroupKey::new(feature, value)).copied().unwrap_or(0.0)
    }

    fn validate(&self) -> Result<()> {
        match self.penalties.iter().find(|(_, d)| !d.is_finite()) {
            Some((k, d)) => Err(usage(format!("penalty for {k} must be finite, got {d}"))),
            None => Ok(()),
        }
    }
}

const GENDERS: [(&str, u32); 3] = [("male", 45), ("female", 45), ("nonbinary", 10)];
const ETHNICITIES: [(&str, u32); 4] = [("A", 40), ("B", 25), ("C", 20), ("D", 15)];
const SES_LEVELS: [(&str, u32); 3] = [("low", 30), ("mid", 45), ("high", 25)];
const MERIT_WEIGHTS: [f64; 5] = [0.30, 0.25, 0.20, 0.15, 0.10];
const MERIT_NOISE: f64 = 0.5;
/// Share of a candidate's group penalty that shows up in the recorded
/// features; the rest only affects the label.
pub const RECORDED_PENALTY_SHARE: f64 = 0.5;
/// Share of candidates labelled as hired.
pub const HIRING_POSITIVE_RATE: f64 = 0.3;

/// Hiring candidates with five merit features (experience, education, test
/// score, skills, internship) and sensitive attributes gender, ethnicity and
/// ses. The latent score is the standardised merit combination plus noise,
/// minus the summed group penalties; the top 30% by latent score are labelled
/// 1 (ties by row order). The recorded features carry
/// [`RECORDED_PENALTY_SHARE`] of the penalty along the merit direction, so a
/// model partly sees the disadvantage without seeing the group.
pub fn gen_hiring_dataset(seed: u64, n: usize, bias: &BiasSpec) -> Result<Dataset> {
    bias.validate()?;
    let mut r = rng(seed);
    let z = std_normal();
    let draw = |table: &[(&'static str, u32)], r: &mut ChaCha8Rng| {
        let w = WeightedIndex::new(table.iter().map(|t| t.1)).expect("positive weights");
        table[w.sample(r)].0
    };
    let mut x = Array2::zeros((n, 5));
    let mut raw = Vec::with_capacity(n);
    let mut columns: [Vec<String>; 3] = Default::default();
    for i in 0..n {
        let mut merit = 0.0;
        for (j, w) in MERIT_WEIGHTS.iter().enumerate() {
            x[[i, j]] = z.sample(&mut r);
            merit += w * x[[i, j]];
        }
        let norm = MERIT_WEIGHTS.iter().map(|w| w * w).sum::<f64>().sqrt();
        raw.push(merit / norm + MERIT_NOISE * z.sample(&mut r));
        columns[0].push(draw(&GENDERS, &mut r).to_string());
        columns[1].push(draw(&ETHNICITIES, &mut r).to_string());
        columns[2].push(draw(&SES_LEVELS, &mut r).to_string());
    }
    let mean = raw.iter().sum::<f64>() / n.max(1) as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    let names = ["gender", "ethnicity", "ses"];
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let norm = MERIT_WEIGHTS.iter().map(|w| w * w).sum::<f64>().sqrt();
    let latent: Vec<f64> = (0..n)
        .map(|i| {
            let penalty: f64 = names.iter().zip(&columns).map(|(f, col)| bias.penalty(f, &col[i])).sum();
            for (j, w) in MERIT_WEIGHTS.iter().enumerate() {
                x[[i, j]] -= RECORDED_PENALTY_SHARE * penalty * sd * w / norm;
            }
            (raw[i] - mean) / sd - penalty
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]).then(a.cmp(&b)));
    let k = (HIRING_POSITIVE_RATE * n as f64).round() as usize;
    let mut labels = vec![0usize; n];
    for &i in &order[..k] {
        labels[i] = 1;
    }
    standardize(&mut x);
    let mut ds = Dataset::new(x, Some(Target::Class { labels, n_classes: 2 }));
    ds.sensitive = names
        .iter()
        .zip(columns)
        .map(|(name, values)| SensitiveColumn {
            name: name.to_string(),
            values,
        })
        .collect();
    Ok(ds)
}

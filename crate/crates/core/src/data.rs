//! Tabular datasets, sensitive-attribute groups and seeded splits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{data, Result};

/// Response column of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class { labels: Vec<usize>, n_classes: usize },
    Real(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Class { labels, .. } => labels.len(),
            Target::Real(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Target {
        match self {
            Target::Class { labels, n_classes } => Target::Class {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Target::Real(y) => Target::Real(rows.iter().map(|&i| y[i]).collect()),
        }
    }
}

/// One categorical sensitive attribute, e.g. `gender`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveColumn {
    pub name: String,
    pub values: Vec<String>,
}

/// Feature matrix plus optional label, treatment, environment and sensitive columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub target: Option<Target>,
    pub treatment: Option<Vec<u8>>,
    pub environment: Option<Vec<u8>>,
    pub sensitive: Vec<SensitiveColumn>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, target: Option<Target>) -> Self {
        Self {
            features,
            target,
            treatment: None,
            environment: None,
            sensitive: Vec::new(),
        }
    }

    /// Dataset with zero rows and `d` feature columns.
    pub fn empty(d: usize) -> Self {
        Self::new(Array2::zeros((0, d)), None)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn class_labels(&self) -> Result<(&[usize], usize)> {
        match &self.target {
            Some(Target::Class { labels, n_classes }) => Ok((labels, *n_classes)),
            Some(Target::Real(_)) => Err(data("expected class labels, found real-valued outcomes")),
            None => Err(data("dataset has no labels")),
        }
    }

    pub fn real_targets(&self) -> Result<&[f64]> {
        match &self.target {
            Some(Target::Real(y)) => Ok(y),
            Some(Target::Class { .. }) => Err(data("expected real-valued outcomes, found class labels")),
            None => Err(data("dataset has no labels")),
        }
    }

    /// Checks the structural invariants: finite features and matching column lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if let Some(bad) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(data(format!(
                "non-finite feature at row {}, column {}",
                bad / self.n_features().max(1),
                bad % self.n_features().max(1)
            )));
        }
        if let Some(t) = &self.target {
            if t.len() != n {
                return Err(data(format!("{} labels for {} rows", t.len(), n)));
            }
            if let Target::Class { labels, n_classes } = t {
                if labels.iter().any(|&c| c >= *n_classes) {
                    return Err(data("class label out of range"));
                }
            }
        }
        if self.treatment.as_ref().is_some_and(|t| t.len() != n) {
            return Err(data("treatment column length mismatch"));
        }
        if self.environment.as_ref().is_some_and(|e| e.len() != n) {
            return Err(data("environment column length mismatch"));
        }
        for col in &self.sensitive {
            if col.values.len() != n {
                return Err(data(format!("sensitive column `{}` length mismatch", col.name)));
            }
        }
        Ok(())
    }

    /// Rows `rows` (in the given order) of every column.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            target: self.target.as_ref().map(|t| t.select(rows)),
            treatment: self.treatment.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect()),
            environment: self.environment.as_ref().map(|e| rows.iter().map(|&i| e[i]).collect()),
            sensitive: self
                .sensitive
                .iter()
                .map(|c| SensitiveColumn {
                    name: c.name.clone(),
                    values: rows.iter().map(|&i| c.values[i].clone()).collect(),
                })
                .collect(),
        }
    }

    /// Marginal groups over every sensitive column.
    pub fn groups(&self) -> Groups {
        Groups::marginal(&self.sensitive)
    }

    /// Writes the CSV export: `f0..f{d-1}` then whichever optional columns are present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        if self.target.is_some() {
            header.push("label".into());
        }
        if self.treatment.is_some() {
            header.push("treatment".into());
        }
        if self.environment.is_some() {
            header.push("env".into());
        }
        for col in &self.sensitive {
            header.push(col.name.clone());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            match &self.target {
                Some(Target::Class { labels, .. }) => rec.push(labels[i].to_string()),
                Some(Target::Real(y)) => rec.push(y[i].to_string()),
                None => {}
            }
            if let Some(t) = &self.treatment {
                rec.push(t[i].to_string());
            }
            if let Some(e) = &self.environment {
                rec.push(e[i].to_string());
            }
            for col in &self.sensitive {
                rec.push(col.values[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// A marginal group: one value of one sensitive attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub feature: String,
    pub value: String,
}

impl GroupKey {
    pub fn new(feature: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            feature: feature.into(),
            value: value.into(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.feature, self.value)
    }
}

/// Group membership of every sample. A sample may belong to several groups
/// (one per sensitive attribute); keys are kept in sorted order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Groups {
    keys: Vec<GroupKey>,
    membership: Vec<Vec<usize>>,
}

impl Groups {
    /// Builds groups from explicit keys and per-sample group ids.
    pub fn new(keys: Vec<GroupKey>, membership: Vec<Vec<usize>>) -> Result<Self> {
        for m in &membership {
            if m.iter().any(|&g| g >= keys.len()) {
                return Err(data("group id out of range"));
            }
        }
        Ok(Self { keys, membership })
    }

    /// One group per (attribute, value) pair.
    pub fn marginal(columns: &[SensitiveColumn]) -> Self {
        let n = columns.first().map_or(0, |c| c.values.len());
        let mut index: BTreeMap<GroupKey, usize> = BTreeMap::new();
        for col in columns {
            for v in &col.values {
                index.entry(GroupKey::new(&col.name, v)).or_insert(0);
            }
        }
        for (id, slot) in index.values_mut().enumerate() {
            *slot = id;
        }
        let membership = (0..n)
            .map(|i| {
                columns
                    .iter()
                    .map(|c| index[&GroupKey::new(&c.name, &c.values[i])])
                    .collect()
            })
            .collect();
        Self {
            keys: index.into_keys().collect(),
            membership,
        }
    }

    /// Single-attribute convenience: one group label per sample.
    pub fn from_labels(feature: &str, labels: &[&str]) -> Self {
        Self::marginal(&[SensitiveColumn {
            name: feature.to_string(),
            values: labels.iter().map(|s| s.to_string()).collect(),
        }])
    }

    pub fn keys(&self) -> &[GroupKey] {
        &self.keys
    }

    pub fn n_groups(&self) -> usize {
        self.keys.len()
    }

    pub fn n_samples(&self) -> usize {
        self.membership.len()
    }

    /// Group ids of sample `i`.
    pub fn of(&self, i: usize) -> &[usize] {
        &self.membership[i]
    }

    pub fn id(&self, key: &GroupKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.keys.len()];
        for m in &self.membership {
            for &g in m {
                sizes[g] += 1;
            }
        }
        sizes
    }

    /// Restriction to rows `rows`, keeping the same key set.
    pub fn select(&self, rows: &[usize]) -> Groups {
        Groups {
            keys: self.keys.clone(),
            membership: rows.iter().map(|&i| self.membership[i].clone()).collect(),
        }
    }
}

/// Seeded split into (first, second) row index sets, with `second_frac` of the
/// rows in the second part. When `labels` is given the split is stratified.
pub fn split_indices(
    n: usize,
    second_frac: f64,
    labels: Option<&[usize]>,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata: Vec<Vec<usize>> = match labels {
        Some(labels) => {
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let mut s = vec![Vec::new(); k];
            for (i, &c) in labels.iter().enumerate() {
                s[c].push(i);
            }
            s
        }
        None => vec![(0..n).collect()],
    };
    let mut first = Vec::new();
    let mut second = Vec::new();
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        let cut = (stratum.len() as f64 * second_frac).round() as usize;
        second.extend_from_slice(&stratum[..cut]);
        first.extend_from_slice(&stratum[cut..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

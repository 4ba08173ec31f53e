//! CART-style trees with a pluggable node impurity.
//!
//! Split search is exhaustive over midpoints between consecutive distinct
//! values of each candidate feature; a split minimises the size-weighted mean
//! impurity of its two children. Impurities see sufficient statistics only,
//! so group-aware criteria can be plugged in without touching the search.

use std::fmt;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Groups;

/// Sufficient statistics of the samples at a node (or a candidate child).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub count: f64,
    /// Per-class counts; empty for regression.
    pub class_counts: Vec<f64>,
    pub sum: f64,
    pub sum_sq: f64,
    /// Per-group member counts; empty unless the impurity asks for groups.
    pub group_counts: Vec<f64>,
    /// `group_class_counts[g][c]`.
    pub group_class_counts: Vec<Vec<f64>>,
}

impl NodeStats {
    fn new(n_classes: usize, n_groups: usize) -> Self {
        Self {
            count: 0.0,
            class_counts: vec![0.0; n_classes],
            sum: 0.0,
            sum_sq: 0.0,
            group_counts: vec![0.0; n_groups],
            group_class_counts: vec![vec![0.0; n_classes]; n_groups],
        }
    }

    /// Statistics for a classification node with the given labels and, per
    /// sample, the groups it belongs to.
    pub fn for_classes(labels: &[usize], n_classes: usize, groups: Option<(&[Vec<usize>], usize)>) -> Self {
        let n_groups = groups.map_or(0, |g| g.1);
        let mut s = Self::new(n_classes, n_groups);
        for (i, &c) in labels.iter().enumerate() {
            let member_of = groups.map_or(&[][..], |g| &g.0[i][..]);
            s.add(&Sample::Class(c), member_of, 1.0);
        }
        s
    }

    fn add(&mut self, y: &Sample, groups: &[usize], sign: f64) {
        self.count += sign;
        match *y {
            Sample::Class(c) => {
                self.class_counts[c] += sign;
                for &g in groups {
                    self.group_counts[g] += sign;
                    self.group_class_counts[g][c] += sign;
                }
            }
            Sample::Real(v) => {
                self.sum += sign * v;
                self.sum_sq += sign * v * v;
                for &g in groups {
                    self.group_counts[g] += sign;
                }
            }
        }
    }
}

enum Sample {
    Class(usize),
    Real(f64),
}

/// Node impurity computed from [`NodeStats`].
pub trait Impurity: fmt::Debug + Send + Sync {
    fn impurity(&self, stats: &NodeStats) -> f64;

    /// Whether the criterion needs per-group statistics.
    fn uses_groups(&self) -> bool {
        false
    }
}

/// `1 - sum_c p_c^2` over a vector of class counts.
pub fn gini_of_counts(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Gini;

impl Impurity for Gini {
    fn impurity(&self, stats: &NodeStats) -> f64 {
        gini_of_counts(&stats.class_counts)
    }
}

/// Within-node variance of the response.
#[derive(Debug, Clone, Copy, Default)]
pub struct Variance;

impl Impurity for Variance {
    fn impurity(&self, stats: &NodeStats) -> f64 {
        if stats.count <= 0.0 {
            return 0.0;
        }
        let mean = stats.sum / stats.count;
        (stats.sum_sq / stats.count - mean * mean).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree stored as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by `x`: class frequencies or a one-element mean.
    pub fn leaf_value(&self, x: ArrayView1<'_, f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Response column seen by the tree builder.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Response<'a> {
    Class { labels: &'a [usize], n_classes: usize },
    Real(&'a [f64]),
}

pub(crate) struct TreeBuilder<'a> {
    pub x: &'a Array2<f64>,
    pub y: Response<'a>,
    pub groups: Option<&'a Groups>,
    pub impurity: &'a dyn Impurity,
    pub max_depth: usize,
    pub max_features: usize,
}

impl TreeBuilder<'_> {
    fn sample(&self, i: usize) -> Sample {
        match self.y {
            Response::Class { labels, .. } => Sample::Class(labels[i]),
            Response::Real(y) => Sample::Real(y[i]),
        }
    }

    fn member_of(&self, i: usize) -> &[usize] {
        match self.groups {
            Some(g) if self.impurity.uses_groups() => g.of(i),
            _ => &[],
        }
    }

    fn stats(&self, rows: &[usize]) -> NodeStats {
        let (k, g) = self.shape();
        let mut s = NodeStats::new(k, g);
        for &i in rows {
            s.add(&self.sample(i), self.member_of(i), 1.0);
        }
        s
    }

    fn shape(&self) -> (usize, usize) {
        let k = match self.y {
            Response::Class { n_classes, .. } => n_classes,
            Response::Real(_) => 0,
        };
        let g = match self.groups {
            Some(g) if self.impurity.uses_groups() => g.n_groups(),
            _ => 0,
        };
        (k, g)
    }

    fn leaf(&self, stats: &NodeStats) -> Node {
        let value = match self.y {
            Response::Class { .. } => stats.class_counts.iter().map(|c| c / stats.count).collect(),
            Response::Real(_) => vec![stats.sum / stats.count],
        };
        Node::Leaf { value }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.y {
            Response::Class { labels, .. } => rows.iter().all(|&i| labels[i] == labels[rows[0]]),
            Response::Real(y) => rows.iter().all(|&i| y[i] == y[rows[0]]),
        }
    }

    /// Grows a tree on `rows` (bootstrap duplicates allowed).
    pub fn build<R: Rng>(&self, rows: Vec<usize>, rng: &mut R) -> Tree {
        let mut nodes = Vec::new();
        self.grow(rows, 0, &mut nodes, rng);
        Tree { nodes }
    }

    fn grow<R: Rng>(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>, rng: &mut R) -> usize {
        let at = nodes.len();
        let stats = self.stats(&rows);
        nodes.push(self.leaf(&stats));
        if depth >= self.max_depth || rows.len() < 2 || self.is_pure(&rows) {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(&rows, &stats, rng) else {
            return at;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
        drop(rows);
        let left = self.grow(left_rows, depth + 1, nodes, rng);
        let right = self.grow(right_rows, depth + 1, nodes, rng);
        nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    /// Draws candidate features in random order; the first `max_features`
    /// are searched, and further ones only while no valid split was found.
    fn best_split<R: Rng>(&self, rows: &[usize], stats: &NodeStats, rng: &mut R) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..self.x.ncols()).collect();
        features.shuffle(rng);
        let n = rows.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            let mut order = rows.to_vec();
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let (k, g) = self.shape();
            let mut left = NodeStats::new(k, g);
            let mut right = stats.clone();
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                let sample = self.sample(i);
                left.add(&sample, self.member_of(i), 1.0);
                right.add(&sample, self.member_of(i), -1.0);
                let (lo, hi) = (self.x[[i, f]], self.x[[order[pos + 1], f]]);
                if hi <= lo {
                    continue;
                }
                let score = (left.count * self.impurity.impurity(&left)
                    + right.count * self.impurity.impurity(&right))
                    / n;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gini_values() {
        assert_eq!(gini_of_counts(&[5.0, 3.0]), 0.46875);
        assert_eq!(gini_of_counts(&[4.0, 0.0]), 0.0);
        assert_eq!(gini_of_counts(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn variance_impurity() {
        let b = TreeBuilder {
            x: &array![[0.0], [1.0], [2.0]],
            y: Response::Real(&[1.0, 2.0, 3.0]),
            groups: None,
            impurity: &Variance,
            max_depth: 3,
            max_features: 1,
        };
        let s = b.stats(&[0, 1, 2]);
        assert!((Variance.impurity(&s) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn splits_at_midpoint() {
        let x = array![[0.0], [1.0], [3.0], [4.0]];
        let labels = [0, 0, 1, 1];
        let b = TreeBuilder {
            x: &x,
            y: Response::Class {
                labels: &labels,
                n_classes: 2,
            },
            groups: None,
            impurity: &Gini,
            max_depth: 5,
            max_features: 1,
        };
        let tree = b.build(vec![0, 1, 2, 3], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.depth(), 1);
        match &tree.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.0),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.leaf_value(x.row(3)), &[0.0, 1.0]);
    }

    #[test]
    fn constant_feature_becomes_leaf() {
        let x = array![[1.0], [1.0], [1.0]];
        let labels = [0, 1, 0];
        let b = TreeBuilder {
            x: &x,
            y: Response::Class {
                labels: &labels,
                n_classes: 2,
            },
            groups: None,
            impurity: &Gini,
            max_depth: 5,
            max_features: 1,
        };
        let tree = b.build(vec![0, 1, 2], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(tree.nodes.len(), 1);
        let v = tree.leaf_value(x.row(0));
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
    }
}

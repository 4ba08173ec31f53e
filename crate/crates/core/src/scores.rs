use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Per-sample, per-class probability table with entries in `[0, 1]`.
///
/// Rows need not sum to one: constraint repairs deliberately move mass
/// without renormalising.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores(Array2<f64>);

impl ClassScores {
    pub fn new(table: Array2<f64>) -> Result<Self> {
        if table.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(usage("class scores must lie in [0, 1]"));
        }
        Ok(Self(table))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(usage("ragged score rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((rows.len(), k), flat).expect("shape checked"))
    }

    pub(crate) fn from_table_unchecked(table: Array2<f64>) -> Self {
        Self(table)
    }

    pub fn n_rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.0[[i, c]]
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.0
    }

    pub(crate) fn table_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_table(self) -> Array2<f64> {
        self.0
    }

    /// Column `c` as a vector, e.g. positive-class probabilities.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.0.column(c).to_vec()
    }

    /// Row-wise argmax, ties broken toward the lower class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.0.rows().into_iter().map(|r| argmax(&r.to_vec())).collect()
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.6, 0.4]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ClassScores::from_rows(&[vec![1.2, 0.0]]).is_err());
        assert!(ClassScores::from_rows(&[vec![0.5], vec![0.1, 0.2]]).is_err());
    }
}

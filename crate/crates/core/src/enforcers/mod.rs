//! Post-hoc repairs applied to a trained model's outputs.

mod calibration;

pub use calibration::{
    apply_threshold_policy, calibrate_rawlsian_thresholds, select_worst_off, CalibrationConfig, ThresholdPolicy,
};

use ndarray::Array2;

use crate::constraints::{ConstraintSet, RepairConfig};
use crate::error::{usage, Result};
use crate::scores::ClassScores;

/// Gap left below `tau` when one multiplicative reduction is not enough.
pub const EXCLUSION_EPSILON: f64 = 1e-6;

/// Exclusion projection on one row. When `tangent` is given it carries
/// d(score)/d(parameter) through the same piecewise-linear map.
pub(crate) fn exclude_row(row: &mut [f64], mut tangent: Option<&mut [f64]>, cs: &ConstraintSet) {
    for &(a, b) in &cs.exclusions {
        if !(row[a] > cs.tau && row[b] > cs.tau) {
            continue;
        }
        // On ties the higher class index yields, so argmax stays put.
        let low = if row[a] < row[b] { a } else if row[b] < row[a] { b } else { a.max(b) };
        let reduced = row[low] * (1.0 - cs.rho);
        if reduced > cs.tau {
            row[low] = cs.tau - EXCLUSION_EPSILON;
            if let Some(t) = tangent.as_deref_mut() {
                t[low] = 0.0;
            }
        } else {
            row[low] = reduced;
            if let Some(t) = tangent.as_deref_mut() {
                t[low] *= 1.0 - cs.rho;
            }
        }
    }
}

/// Implication transfer on one row, edges in declaration order.
pub(crate) fn imply_row(row: &mut [f64], mut tangent: Option<&mut [f64]>, cs: &ConstraintSet) {
    for &(a, b) in &cs.implications {
        if !(row[a] > cs.tau && row[b] < cs.tau) {
            continue;
        }
        let transfer = row[a] * cs.rho;
        if transfer < cs.tau - row[b] {
            row[b] += transfer;
            if let Some(t) = tangent.as_deref_mut() {
                t[b] += cs.rho * t[a];
            }
        } else {
            // delta = tau - p_b lands exactly on tau.
            row[b] = cs.tau;
            if let Some(t) = tangent.as_deref_mut() {
                t[b] = 0.0;
            }
        }
    }
}

fn map_rows(scores: &ClassScores, cs: &ConstraintSet, f: impl Fn(&mut [f64])) -> Result<ClassScores> {
    cs.validate(scores.n_classes())?;
    let mut out = scores.clone();
    for mut row in out.table_mut().rows_mut() {
        let mut buf = row.to_vec();
        f(&mut buf);
        row.assign(&ndarray::ArrayView1::from(&buf));
    }
    Ok(out)
}

/// For every exclusion pair with both scores above `tau`, scales the lower
/// score by `1 - rho`; if that still exceeds `tau` the score is set to
/// `tau - 1e-6`. The higher score is never touched, so the output has no
/// exclusion violations and each row keeps its argmax.
pub fn apply_mutual_exclusion(scores: &ClassScores, cs: &ConstraintSet) -> Result<ClassScores> {
    map_rows(scores, cs, |row| exclude_row(row, None, cs))
}

/// For every edge `a -> b` with `p_a > tau` and `p_b < tau`, raises `p_b` by
/// `min(rho * p_a, tau - p_b)`. Antecedents are never modified. A single
/// transfer may leave `p_b` below `tau`; such residual violations are kept.
pub fn apply_implication_transfer(scores: &ClassScores, cs: &ConstraintSet) -> Result<ClassScores> {
    map_rows(scores, cs, |row| imply_row(row, None, cs))
}

/// Clamps each counterfactual prediction into `factual ± tau_cf`. The bound
/// is stepped inward by ulps until `|cf - factual| <= tau_cf` holds exactly
/// in floating point.
pub fn repair_counterfactuals(factual: &[f64], cf: &Array2<f64>, config: &RepairConfig) -> Result<Array2<f64>> {
    if cf.nrows() != factual.len() {
        return Err(usage(format!(
            "{} counterfactual rows for {} factual predictions",
            cf.nrows(),
            factual.len()
        )));
    }
    let tau = config.tau_cf;
    let mut out = cf.clone();
    for (mut row, &f) in out.rows_mut().into_iter().zip(factual) {
        for c in row.iter_mut() {
            let diff = *c - f;
            if diff.abs() > tau {
                let mut v = f + diff.signum() * tau;
                while (v - f).abs() > tau {
                    v = if diff > 0.0 { v.next_down() } else { v.next_up() };
                }
                *c = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one(row: &[f64]) -> ClassScores {
        ClassScores::from_rows(&[row.to_vec()]).unwrap()
    }

    #[test]
    fn exclusion_examples() {
        let cs = ConstraintSet::default().exclude(0, 1);
        let r = apply_mutual_exclusion(&one(&[0.60, 0.50]), &cs).unwrap();
        assert_eq!(r.get(0, 0), 0.60);
        assert!((r.get(0, 1) - 0.35).abs() < 1e-15);
        let r = apply_mutual_exclusion(&one(&[0.30, 0.20]), &cs).unwrap();
        assert_eq!(r.row(0).to_vec(), vec![0.30, 0.20]);
        let r = apply_mutual_exclusion(&one(&[0.90, 0.80]), &cs).unwrap();
        assert_eq!(r.get(0, 0), 0.90);
        assert!((r.get(0, 1) - 0.399999).abs() < 1e-15);
    }

    #[test]
    fn exclusion_tie_keeps_lower_index() {
        let cs = ConstraintSet::default().exclude(1, 0);
        let r = apply_mutual_exclusion(&one(&[0.5, 0.5]), &cs).unwrap();
        assert_eq!(r.get(0, 0), 0.5);
        assert!(r.get(0, 1) < 0.4);
    }

    #[test]
    fn implication_examples() {
        let cs = ConstraintSet::default().imply(0, 1);
        let r = apply_implication_transfer(&one(&[0.70, 0.20]), &cs).unwrap();
        assert_eq!(r.get(0, 1), 0.40);
        let r = apply_implication_transfer(&one(&[0.50, 0.45]), &cs).unwrap();
        assert_eq!(r.get(0, 1), 0.45);
        let r = apply_implication_transfer(&one(&[0.45, 0.10]), &cs).unwrap();
        assert!((r.get(0, 1) - 0.235).abs() < 1e-15);
        assert_eq!(r.get(0, 0), 0.45);
    }

    #[test]
    fn chain_cascades_in_one_pass() {
        let cs = ConstraintSet::default().imply(2, 1).imply(1, 0);
        let r = apply_implication_transfer(&one(&[0.1, 0.3, 0.9]), &cs).unwrap();
        // 2 -> 1 lifts class 1 to tau exactly, which no longer activates 1 -> 0.
        assert_eq!(r.row(0).to_vec(), vec![0.1, 0.4, 0.9]);
    }

    #[test]
    fn counterfactual_clamp() {
        let cfg = RepairConfig::new(2.0).unwrap();
        let out = repair_counterfactuals(&[5.0], &array![[8.0, 6.5, 2.0]], &cfg).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![7.0, 6.5, 3.0]);
        assert!(repair_counterfactuals(&[5.0, 1.0], &array![[8.0]], &cfg).is_err());
    }

    #[test]
    fn tangent_follows_branches() {
        let cs = ConstraintSet::default().exclude(0, 1).imply(0, 2);
        let mut row = [0.6, 0.5, 0.1];
        let mut t = [1.0, -1.0, 0.5];
        exclude_row(&mut row, Some(&mut t), &cs);
        imply_row(&mut row, Some(&mut t), &cs);
        assert_eq!(t, [1.0, -0.7, 0.5 + 0.3]);
    }
}

//! Training with an exclusion penalty. The network minimises mean BCE plus
//! `lambda` times the mean violation `min(p0, p1)` of rows where both scores
//! exceed tau.

use normative::constraints::{exclusion_violation_rate, ConstraintSet};
use normative::data::split_indices;
use normative::datagen::gen_exclusion_dataset;
use normative::intrinsic::{constraint_aware_fit, sample_weight, BaseLearner, ConstraintLossConfig};
use normative::learners::{fit_mlp, MlpParams};
use normative::metrics::accuracy;

fn main() -> normative::Result<()> {
    let ds = gen_exclusion_dataset(42, 500, 0.15)?;
    let labels = ds.class_labels()?.0.to_vec();
    let (train, test) = split_indices(ds.n_rows(), 0.3, Some(&labels), 42);
    let (train, test) = (ds.select(&train), ds.select(&test));
    let y_test = test.class_labels()?.0;
    let cs = ConstraintSet::default().exclude(0, 1);

    let params = MlpParams {
        epochs: 1000,
        seed: 42,
        ..MlpParams::default()
    };
    let plain = fit_mlp(&train, &params)?;
    let config = ConstraintLossConfig::default();
    let penalised = constraint_aware_fit(&BaseLearner::Mlp(params), &train, &cs, &config)?;

    for (name, model) in [("plain", &plain), ("penalised", &penalised)] {
        let scores = model.class_scores(&test.features)?;
        println!(
            "{name:>10}: violations {:.3}, accuracy {:.3}",
            exclusion_violation_rate(&scores, &cs)?,
            accuracy(&scores.argmax(), y_test)?
        );
    }

    // The forest variant refits on a bootstrap weighted by exp(-alpha * V).
    println!("weight of a row with V = 0.45 at alpha = 1: {:.5}", sample_weight(0.45, 1.0));
    Ok(())
}

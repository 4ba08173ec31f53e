//! The logic layer runs the exclusion repair and then the implication
//! transfer. Wrapped around a fitted model it makes every score it returns
//! free of exclusion violations.

use normative::constraints::{exclusion_violation_rate, implication_violation_rate, ConstraintSet};
use normative::data::split_indices;
use normative::datagen::gen_hierarchy_dataset;
use normative::intrinsic::{logic_guided_fit, logic_layer, BaseLearner};
use normative::learners::{fit_forest, ForestParams};
use normative::scores::ClassScores;

fn main() -> normative::Result<()> {
    let cs = ConstraintSet::default().exclude(0, 1).imply(0, 2);
    let row = ClassScores::from_rows(&[vec![0.6, 0.5, 0.1]])?;
    let out = logic_layer(&row, &cs)?;
    println!("{:?} -> {:?}", row.row(0).to_vec(), out.row(0).to_vec());

    let ds = gen_hierarchy_dataset(42, 500)?;
    let labels = ds.class_labels()?.0.to_vec();
    let (train, test) = split_indices(ds.n_rows(), 0.3, Some(&labels), 42);
    let (train, test) = (ds.select(&train), ds.select(&test));

    let cs = ConstraintSet::default().exclude(0, 2).imply(2, 1).imply(1, 0);
    let params = ForestParams::with_seed(42);
    let plain = fit_forest(&train, &params)?.class_scores(&test.features)?;
    let guided = logic_guided_fit(&BaseLearner::Forest(params), &train, &cs)?.class_scores(&test.features)?;
    println!(
        "exclusion {:.3} -> {:.3}, implication {:.3} -> {:.3}",
        exclusion_violation_rate(&plain, &cs)?,
        exclusion_violation_rate(&guided, &cs)?,
        implication_violation_rate(&plain, &cs)?,
        implication_violation_rate(&guided, &cs)?
    );
    Ok(())
}

//! Severity implications (severe -> moderate -> mild): when a severe
//! diagnosis is likely, part of its score is moved onto the milder class it
//! implies.

use normative::constraints::{implication_violation_rate, ConstraintSet};
use normative::data::split_indices;
use normative::datagen::gen_hierarchy_dataset;
use normative::enforcers::apply_implication_transfer;
use normative::learners::fit_linear;
use normative::metrics::accuracy;

fn main() -> normative::Result<()> {
    let ds = gen_hierarchy_dataset(42, 500)?;
    let labels = ds.class_labels()?.0.to_vec();
    let (train, test) = split_indices(ds.n_rows(), 0.3, Some(&labels), 42);
    let (train, test) = (ds.select(&train), ds.select(&test));
    let y_test = test.class_labels()?.0;

    let model = fit_linear(&train)?;
    let scores = model.class_scores(&test.features)?;
    // classes: 0 mild, 1 moderate, 2 severe
    let cs = ConstraintSet::default().imply(2, 1).imply(1, 0);
    let repaired = apply_implication_transfer(&scores, &cs)?;

    let before = implication_violation_rate(&scores, &cs)?;
    let after = implication_violation_rate(&repaired, &cs)?;
    println!(
        "implication violations {before:.3} -> {after:.3} ({:.0}% fewer)",
        100.0 * (before - after) / before
    );
    println!(
        "accuracy {:.3} -> {:.3}",
        accuracy(&scores.argmax(), y_test)?,
        accuracy(&repaired.argmax(), y_test)?
    );
    Ok(())
}

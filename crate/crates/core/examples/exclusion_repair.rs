//! Mutually exclusive classes: a forest scores both classes above the
//! activation threshold on ambiguous documents; the exclusion repair lowers
//! the weaker score until the pair no longer fires.

use normative::constraints::{exclusion_violation_rate, ConstraintSet};
use normative::data::split_indices;
use normative::datagen::gen_exclusion_dataset;
use normative::enforcers::apply_mutual_exclusion;
use normative::learners::{fit_forest, ForestParams};
use normative::metrics::accuracy;

fn main() -> normative::Result<()> {
    let ds = gen_exclusion_dataset(42, 500, 0.15)?;
    let labels = ds.class_labels()?.0.to_vec();
    let (train, test) = split_indices(ds.n_rows(), 0.3, Some(&labels), 42);
    let (train, test) = (ds.select(&train), ds.select(&test));
    let y_test = test.class_labels()?.0;

    let model = fit_forest(&train, &ForestParams::with_seed(42))?;
    let scores = model.class_scores(&test.features)?;
    let cs = ConstraintSet::default().exclude(0, 1);
    let repaired = apply_mutual_exclusion(&scores, &cs)?;

    if let Some(i) = (0..scores.n_rows()).find(|&i| scores.get(i, 0) > cs.tau && scores.get(i, 1) > cs.tau) {
        println!("row {i}: {:?} -> {:?}", scores.row(i).to_vec(), repaired.row(i).to_vec());
    }
    println!(
        "violation rate {:.3} -> {:.3}",
        exclusion_violation_rate(&scores, &cs)?,
        exclusion_violation_rate(&repaired, &cs)?
    );
    println!(
        "accuracy {:.3} -> {:.3}",
        accuracy(&scores.argmax(), y_test)?,
        accuracy(&repaired.argmax(), y_test)?
    );
    Ok(())
}

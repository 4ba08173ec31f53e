//! Hiring with group penalties. Post-hoc calibration picks a shared threshold
//! for the groups with the lowest accuracy; the Rawlsian forest instead blends
//! worst-group impurity into its splits.

use normative::data::split_indices;
use normative::datagen::{gen_hiring_dataset, BiasSpec};
use normative::enforcers::{apply_threshold_policy, calibrate_rawlsian_thresholds, CalibrationConfig};
use normative::intrinsic::{rawlsian_forest_fit, RawlsianForestConfig};
use normative::learners::{fit_forest, ForestParams};
use normative::metrics::group_report;

fn main() -> normative::Result<()> {
    let ds = gen_hiring_dataset(42, 1500, &BiasSpec::default())?;
    let labels = ds.class_labels()?.0.to_vec();
    let (train, rest) = split_indices(ds.n_rows(), 0.5, Some(&labels), 42);
    let (train, rest) = (ds.select(&train), ds.select(&rest));
    let rest_labels = rest.class_labels()?.0.to_vec();
    let (calib, test) = split_indices(rest.n_rows(), 0.5, Some(&rest_labels), 43);
    let (calib, test) = (rest.select(&calib), rest.select(&test));

    let params = ForestParams::with_seed(42);
    let model = fit_forest(&train, &params)?;
    let positive = |x| -> normative::Result<Vec<f64>> { Ok(model.class_scores(x)?.column(1)) };

    let policy = calibrate_rawlsian_thresholds(
        &positive(&calib.features)?,
        calib.class_labels()?.0,
        &calib.groups(),
        &CalibrationConfig::default(),
    )?;
    println!("worst-off groups: {:?}", policy.worst_off_groups);
    println!("shared threshold: {:?}", policy.shared_worst_off_threshold);

    let y_test = test.class_labels()?.0;
    let groups = test.groups();
    let scores = positive(&test.features)?;
    let plain: Vec<usize> = scores.iter().map(|&p| usize::from(p > 0.5)).collect();
    let calibrated = apply_threshold_policy(&scores, &groups, &policy)?;
    let fair = rawlsian_forest_fit(&train, &train.groups(), &params, &RawlsianForestConfig::default())?
        .predict_classes(&test.features)?;

    for (name, decisions) in [("plain", &plain), ("calibrated", &calibrated), ("rawlsian forest", &fair)] {
        let report = group_report(decisions, y_test, &groups, 20)?;
        let rates = report.mean_positive_rate(&policy.worst_off_groups).unwrap_or(f64::NAN);
        println!(
            "{name:>16}: accuracy {:.3}, worst-off hiring rate {:.3}",
            report.overall_accuracy, rates
        );
    }
    Ok(())
}

//! Minimal-change repair: a counterfactual prediction may move at most
//! `tau_cf` away from the factual one.

use ndarray::array;
use normative::constraints::{counterfactual_violation_rate, RepairConfig};
use normative::enforcers::repair_counterfactuals;
use normative::harness::{run, Mode, ModelKind, RunConfig, Scenario};

fn main() -> normative::Result<()> {
    let factual = [5.0, 5.0, 5.0];
    let cf = array![[8.0], [6.5], [2.0]];
    let config = RepairConfig::new(2.0)?;
    let repaired = repair_counterfactuals(&factual, &cf, &config)?;
    println!("{:?} -> {:?}", cf.column(0).to_vec(), repaired.column(0).to_vec());
    println!(
        "violation rate {:.2} -> {:.2}",
        counterfactual_violation_rate(&factual, &cf, &config)?,
        counterfactual_violation_rate(&factual, &repaired, &config)?
    );

    // Full run: predict every sample under its two other treatments, clamp.
    let report = run(&RunConfig::new(Scenario::Counterfactual, ModelKind::Forest, Mode::Posthoc, 42))?.report;
    let m = &report.metrics;
    println!(
        "treatment data: violations {:?} -> {:?}, factual mse {:?} -> {:?}",
        m.violation_rate_before, m.violation_rate_after, m.factual_mse_before, m.factual_mse_after
    );
    Ok(())
}

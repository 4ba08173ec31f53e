//! Library equivalent of `normative run`: one seeded run, printed as the
//! report JSON the binary writes.

use normative::harness::{run, Mode, ModelKind, RunConfig, Scenario};

fn main() -> normative::Result<()> {
    let cfg = RunConfig::new(Scenario::Exclusion, ModelKind::Linear, Mode::Posthoc, 7).with("tau", 0.35);
    print!("{}", run(&cfg)?.report.to_json()?);
    Ok(())
}

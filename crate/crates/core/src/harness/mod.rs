//! Seeded experiment runs behind the `normative` binary: generate a dataset,
//! fit a baseline, apply a post-hoc or training-time modification and report
//! held-out metrics.

mod report;
mod scenarios;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

pub use report::{write_summary, EnvMse, Equity, Metrics, Report, SCHEMA_VERSION, SUMMARY_HEADER};
pub use scenarios::{generate, run, RunOutput, SavedArtifact};

use crate::error::{usage, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    Exclusion,
    Hierarchy,
    ConstraintLoss,
    LogicArch,
    Counterfactual,
    EnvEnsemble,
    Hiring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelKind {
    Forest,
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Baseline,
    Posthoc,
    Intrinsic,
}

macro_rules! named_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+ $(,)?) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(usage(format!(
                        "unknown {} `{}`; expected one of: {}",
                        $what,
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(Scenario, "scenario",
    Exclusion => "exclusion",
    Hierarchy => "hierarchy",
    ConstraintLoss => "constraint-loss",
    LogicArch => "logic-arch",
    Counterfactual => "counterfactual",
    EnvEnsemble => "env-ensemble",
    Hiring => "hiring",
);

named_enum!(ModelKind, "model",
    Forest => "forest",
    Linear => "linear",
    Mlp => "mlp",
);

named_enum!(Mode, "mode",
    Baseline => "baseline",
    Posthoc => "posthoc",
    Intrinsic => "intrinsic",
);

impl Scenario {
    /// Models and modes this scenario accepts.
    pub fn supported(self) -> (&'static [ModelKind], &'static [Mode]) {
        use Mode::*;
        use ModelKind::*;
        match self {
            Scenario::Exclusion => (&[Forest, Linear, Mlp], &[Baseline, Posthoc]),
            Scenario::Hierarchy => (&[Forest, Linear], &[Baseline, Posthoc]),
            Scenario::ConstraintLoss => (&[Forest, Linear, Mlp], &[Baseline, Intrinsic]),
            Scenario::LogicArch => (&[Forest, Linear], &[Baseline, Intrinsic]),
            Scenario::Counterfactual => (&[Forest, Linear], &[Baseline, Posthoc]),
            Scenario::EnvEnsemble => (&[Forest, Linear], &[Baseline, Intrinsic]),
            Scenario::Hiring => (&[Forest, Mlp], &[Baseline, Posthoc, Intrinsic]),
        }
    }
}

/// Human-readable table of every supported (scenario, model, mode) triple.
pub fn valid_combinations() -> String {
    let mut out = String::from("valid combinations:\n");
    for &s in Scenario::ALL {
        let (models, modes) = s.supported();
        let join = |names: Vec<&str>| names.join("|");
        out.push_str(&format!(
            "  {:<16} --model {:<18} --mode {}\n",
            s.name(),
            join(models.iter().map(|m| m.name()).collect()),
            join(modes.iter().map(|m| m.name()).collect()),
        ));
    }
    out
}

/// One experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub mode: Mode,
    pub seed: u64,
    /// Raw `key=value` overrides, checked against the scenario's parameters.
    pub overrides: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(scenario: Scenario, model: ModelKind, mode: Mode, seed: u64) -> Self {
        Self {
            scenario,
            model,
            mode,
            seed,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.insert(key.to_string(), value.to_string());
        self
    }

    pub fn check_supported(&self) -> Result<()> {
        let (models, modes) = self.scenario.supported();
        if models.contains(&self.model) && modes.contains(&self.mode) {
            return Ok(());
        }
        Err(usage(format!(
            "unsupported combination: --scenario {} --model {} --mode {}\n{}",
            self.scenario,
            self.model,
            self.mode,
            valid_combinations()
        )))
    }

    /// Effective parameters: the scenario defaults with overrides applied.
    pub fn params(&self) -> Result<Params> {
        let mut values = default_params(self);
        for (key, raw) in &self.overrides {
            let slot = values.get_mut(key.as_str()).ok_or_else(|| {
                usage(format!(
                    "unknown parameter `{key}` for {} / {} / {}; known: {}",
                    self.scenario,
                    self.model,
                    self.mode,
                    default_params(self).keys().copied().collect::<Vec<_>>().join(", ")
                ))
            })?;
            *slot = parse_like(slot, key, raw)?;
        }
        Ok(Params { values })
    }
}

fn parse_like(default: &Value, key: &str, raw: &str) -> Result<Value> {
    let bad = |kind: &str| usage(format!("parameter `{key}` expects {kind}, got `{raw}`"));
    match default {
        Value::Bool(_) => raw.parse::<bool>().map(Value::Bool).map_err(|_| bad("true or false")),
        Value::Number(n) if n.is_u64() => raw.parse::<u64>().map(Value::from).map_err(|_| bad("a non-negative integer")),
        _ => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::from(v)),
            _ => Err(bad("a finite number")),
        },
    }
}

fn default_params(cfg: &RunConfig) -> BTreeMap<&'static str, Value> {
    let mut p: BTreeMap<&'static str, Value> = BTreeMap::new();
    let n = match cfg.scenario {
        Scenario::Counterfactual => 600,
        Scenario::EnvEnsemble => 250,
        Scenario::Hiring => 1500,
        _ => 500,
    };
    p.insert("n", n.into());
    if cfg.scenario != Scenario::EnvEnsemble {
        p.insert("test_fraction", 0.3.into());
    }
    match cfg.model {
        ModelKind::Forest => {
            p.insert("n_trees", 100.into());
            p.insert("max_depth", 10.into());
        }
        ModelKind::Mlp => {
            p.insert("hidden_dim", 64.into());
            p.insert("hidden_layers", 3.into());
            p.insert("dropout_rate", 0.2.into());
            let epochs = if cfg.scenario == Scenario::ConstraintLoss { 1000 } else { 100 };
            p.insert("epochs", epochs.into());
            p.insert("learning_rate", 0.001.into());
            p.insert("batch_size", 0.into());
        }
        ModelKind::Linear => {}
    }
    match cfg.scenario {
        Scenario::Exclusion | Scenario::ConstraintLoss => {
            p.insert("ambiguous_frac", 0.15.into());
            p.insert("tau", 0.4.into());
            p.insert("rho", 0.3.into());
        }
        Scenario::Hierarchy | Scenario::LogicArch => {
            p.insert("tau", 0.4.into());
            p.insert("rho", 0.3.into());
        }
        Scenario::Counterfactual => {
            p.insert("tau_cf", 1.5.into());
        }
        Scenario::EnvEnsemble | Scenario::Hiring => {}
    }
    if cfg.scenario == Scenario::ConstraintLoss {
        p.insert("lambda", 2.0.into());
        p.insert("alpha", 5.0.into());
        p.insert("rounds", 3.into());
    }
    if cfg.scenario == Scenario::Hiring {
        p.insert("validation_split", 0.2.into());
        p.insert("min_group_size", 20.into());
        match cfg.mode {
            Mode::Posthoc => {
                p.insert("min_accuracy_retention", 0.9.into());
                p.insert("threshold_step", 0.02.into());
                p.insert("per_group_mode", false.into());
            }
            Mode::Intrinsic => {
                let lambda = if cfg.model == ModelKind::Mlp { 0.7 } else { 0.3 };
                p.insert("lambda", lambda.into());
            }
            Mode::Baseline => {}
        }
    }
    p
}

/// Resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    values: BTreeMap<&'static str, Value>,
}

impl Params {
    pub fn f64(&self, key: &str) -> f64 {
        self.values[key].as_f64().expect("numeric parameter")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.values[key].as_u64().expect("integer parameter")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn bool(&self, key: &str) -> bool {
        self.values[key].as_bool().expect("boolean parameter")
    }

    pub fn to_map(&self) -> BTreeMap<String, Value> {
        self.values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }
}

/// Parses a plain-text `key=value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

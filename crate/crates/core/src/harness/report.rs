//! Report document written by `run` and the summary table written by `report`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::GroupKey;
use crate::enforcers::ThresholdPolicy;
use crate::error::Result;
use crate::metrics::{EquityDeltas, GroupStats};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub scenario: String,
    pub model: String,
    pub mode: String,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupStats>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<ThresholdPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equity: Option<Equity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Accuracy of the plain baseline when the mode changes the model or its outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_rate_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_rate_after: Option<f64>,
    /// Per-constraint-kind rates, e.g. `exclusion_before`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_breakdown: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factual_mse_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factual_mse_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_mse: Option<EnvMse>,
    /// Pooled-baseline environment errors, reported alongside the ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_mse_before: Option<EnvMse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_rate: Option<f64>,
    /// Best minus worst group accuracy, per sensitive attribute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disparity: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMse {
    pub per_env: BTreeMap<String, f64>,
    pub variance: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equity {
    pub worst_off_groups: Vec<GroupKey>,
    pub best_off_groups: Vec<GroupKey>,
    #[serde(flatten)]
    pub deltas: EquityDeltas,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "scenario",
    "model",
    "mode",
    "seed",
    "accuracy",
    "mse",
    "violation_rate_before",
    "violation_rate_after",
    "env_mse_variance",
    "env_mse_mean",
    "disparity_gender",
    "disparity_ethnicity",
    "disparity_ses",
    "worst_off_improvement_pct",
    "gap_reduction_pct",
    "overall_accuracy_delta",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    fn summary_row(&self) -> Vec<String> {
        let m = &self.metrics;
        let disparity = |f: &str| cell(m.disparity.as_ref().and_then(|d| d.get(f).copied()));
        let eq = self.equity.as_ref().map(|e| e.deltas);
        vec![
            self.scenario.clone(),
            self.model.clone(),
            self.mode.clone(),
            self.seed.to_string(),
            cell(m.accuracy),
            cell(m.mse),
            cell(m.violation_rate_before),
            cell(m.violation_rate_after),
            cell(m.env_mse.as_ref().map(|e| e.variance)),
            cell(m.env_mse.as_ref().map(|e| e.mean)),
            disparity("gender"),
            disparity("ethnicity"),
            disparity("ses"),
            cell(eq.and_then(|d| d.worst_off_rate_improvement_pct)),
            cell(eq.and_then(|d| d.gap_reduction_pct)),
            cell(eq.map(|d| d.overall_accuracy_delta)),
        ]
    }
}

/// One CSV row per report under [`SUMMARY_HEADER`]; inapplicable cells are empty.
pub fn write_summary<W: Write>(reports: &[Report], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        w.write_record(r.summary_row())?;
    }
    w.flush()?;
    Ok(())
}

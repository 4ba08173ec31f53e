use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};

use super::report::{EnvMse, Equity, Metrics, Report, SCHEMA_VERSION};
use super::{Mode, ModelKind, Params, RunConfig, Scenario};
use crate::constraints::{
    counterfactual_violation_rate, env_mse_variance, exclusion_violation_rate, implication_violation_rate,
    ConstraintSet, RepairConfig,
};
use crate::data::{split_indices, Dataset, GroupKey, Target};
use crate::datagen::{
    gen_environment_dataset, gen_exclusion_dataset, gen_hiring_dataset, gen_hierarchy_dataset, gen_treatment_dataset,
    BiasSpec,
};
use crate::enforcers::{
    apply_implication_transfer, apply_mutual_exclusion, apply_threshold_policy, calibrate_rawlsian_thresholds,
    repair_counterfactuals, select_worst_off, CalibrationConfig,
};
use crate::error::{data, Result};
use crate::intrinsic::{
    constraint_aware_fit, env_ensemble_fit, logic_guided_fit, rawlsian_forest_fit, rawlsian_mlp_fit, BaseLearner,
    ConstraintLossConfig, EnvEnsemble, Family, RawlsianForestConfig, RawlsianLossConfig,
};
use crate::learners::{fit_forest, fit_linear, fit_mlp, FittedModel, ForestParams, MlpParams};
use crate::metrics::{accuracy, equity_deltas, group_report, mse, GroupReport};
use crate::scores::ClassScores;

/// Dataset for `gen`. For `env-ensemble`, `n` counts rows per environment.
pub fn generate(scenario: Scenario, seed: u64, n: usize) -> Result<Dataset> {
    match scenario {
        Scenario::Exclusion | Scenario::ConstraintLoss => gen_exclusion_dataset(seed, n, 0.15),
        Scenario::Hierarchy | Scenario::LogicArch => gen_hierarchy_dataset(seed, n),
        Scenario::Counterfactual => gen_treatment_dataset(seed, n),
        Scenario::EnvEnsemble => gen_environment_dataset(seed, n),
        Scenario::Hiring => gen_hiring_dataset(seed, n, &BiasSpec::default()),
    }
}

/// Trained artefact of a run, for `--save-model`.
#[derive(Debug, Clone)]
pub enum SavedArtifact {
    Model(FittedModel),
    Ensemble(EnvEnsemble),
}

impl SavedArtifact {
    pub fn to_json(&self) -> Result<String> {
        match self {
            SavedArtifact::Model(m) => m.to_json(),
            SavedArtifact::Ensemble(e) => Ok(serde_json::to_string(&serde_json::json!({
                "format_version": 1,
                "ensemble": e,
            }))?),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub artifact: SavedArtifact,
}

/// Runs one experiment end to end.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.check_supported()?;
    let p = cfg.params()?;
    let ctx = Ctx { cfg, p: &p };
    let (metrics, extra, artifact) = match cfg.scenario {
        Scenario::Exclusion | Scenario::Hierarchy => ctx.logic_posthoc()?,
        Scenario::ConstraintLoss | Scenario::LogicArch => ctx.logic_intrinsic()?,
        Scenario::Counterfactual => ctx.counterfactual()?,
        Scenario::EnvEnsemble => ctx.env_ensemble()?,
        Scenario::Hiring => ctx.hiring()?,
    };
    Ok(RunOutput {
        report: Report {
            schema_version: SCHEMA_VERSION,
            scenario: cfg.scenario.name().into(),
            model: cfg.model.name().into(),
            mode: cfg.mode.name().into(),
            seed: cfg.seed,
            params: p.to_map(),
            metrics,
            groups: extra.groups,
            policy: extra.policy,
            equity: extra.equity,
        },
        artifact,
    })
}

#[derive(Default)]
struct Extra {
    groups: Option<Vec<crate::metrics::GroupStats>>,
    policy: Option<crate::enforcers::ThresholdPolicy>,
    equity: Option<Equity>,
}

type Outcome = (Metrics, Extra, SavedArtifact);

struct Ctx<'a> {
    cfg: &'a RunConfig,
    p: &'a Params,
}

fn labels_of(ds: &Dataset) -> Result<Vec<usize>> {
    Ok(ds.class_labels()?.0.to_vec())
}

impl Ctx<'_> {
    fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.p.usize("n_trees"),
            max_depth: self.p.usize("max_depth"),
            seed: self.cfg.seed,
            impurity: None,
        }
    }

    fn mlp_params(&self) -> MlpParams {
        let batch = self.p.usize("batch_size");
        MlpParams {
            hidden_dim: self.p.usize("hidden_dim"),
            hidden_layers: self.p.usize("hidden_layers"),
            dropout_rate: self.p.f64("dropout_rate"),
            epochs: self.p.usize("epochs"),
            learning_rate: self.p.f64("learning_rate"),
            seed: self.cfg.seed,
            batch_size: (batch > 0).then_some(batch),
            loss: None,
        }
    }

    fn base_learner(&self) -> BaseLearner {
        match self.cfg.model {
            ModelKind::Forest => BaseLearner::Forest(self.forest_params()),
            ModelKind::Linear => BaseLearner::Logistic,
            ModelKind::Mlp => BaseLearner::Mlp(self.mlp_params()),
        }
    }

    fn fit_baseline(&self, ds: &Dataset) -> Result<FittedModel> {
        match self.cfg.model {
            ModelKind::Forest => fit_forest(ds, &self.forest_params()),
            ModelKind::Linear => fit_linear(ds),
            ModelKind::Mlp => fit_mlp(ds, &self.mlp_params()),
        }
    }

    fn classification_split(&self, ds: &Dataset) -> Result<(Dataset, Dataset)> {
        if ds.is_empty() {
            return Err(data("scenario dataset is empty; increase n"));
        }
        let labels = labels_of(ds)?;
        let (train, test) = split_indices(ds.n_rows(), self.p.f64("test_fraction"), Some(&labels), self.cfg.seed);
        if train.is_empty() || test.is_empty() {
            return Err(data("train/test split left one side empty; increase n"));
        }
        Ok((ds.select(&train), ds.select(&test)))
    }

    fn constraint_set(&self) -> Result<ConstraintSet> {
        let base = ConstraintSet::new(self.p.f64("tau"), self.p.f64("rho"))?;
        Ok(match self.cfg.scenario {
            Scenario::Exclusion | Scenario::ConstraintLoss => base.exclude(0, 1),
            Scenario::Hierarchy => base.imply(2, 1).imply(1, 0),
            _ => base.exclude(0, 2).imply(2, 1).imply(1, 0),
        })
    }

    fn logic_dataset(&self) -> Result<Dataset> {
        let n = self.p.usize("n");
        match self.cfg.scenario {
            Scenario::Exclusion | Scenario::ConstraintLoss => {
                gen_exclusion_dataset(self.cfg.seed, n, self.p.f64("ambiguous_frac"))
            }
            _ => gen_hierarchy_dataset(self.cfg.seed, n),
        }
    }

    /// Exclusion or implication repair of a baseline's test scores.
    fn logic_posthoc(&self) -> Result<Outcome> {
        let (train, test) = self.classification_split(&self.logic_dataset()?)?;
        let cs = self.constraint_set()?;
        let model = self.fit_baseline(&train)?;
        let y = labels_of(&test)?;
        let scores = model.class_scores(&test.features)?;
        let exclusion = self.cfg.scenario == Scenario::Exclusion;
        let rate = |s: &ClassScores| {
            if exclusion {
                exclusion_violation_rate(s, &cs)
            } else {
                implication_violation_rate(s, &cs)
            }
        };
        let mut m = Metrics {
            accuracy: Some(accuracy(&scores.argmax(), &y)?),
            violation_rate_before: Some(rate(&scores)?),
            ..Metrics::default()
        };
        if self.cfg.mode == Mode::Posthoc {
            let repaired = if exclusion {
                apply_mutual_exclusion(&scores, &cs)?
            } else {
                apply_implication_transfer(&scores, &cs)?
            };
            m.accuracy_before = m.accuracy;
            m.accuracy = Some(accuracy(&repaired.argmax(), &y)?);
            m.violation_rate_after = Some(rate(&repaired)?);
        }
        Ok((m, Extra::default(), SavedArtifact::Model(model)))
    }

    /// Constraint-aware or logic-guided training against a plain baseline.
    fn logic_intrinsic(&self) -> Result<Outcome> {
        let (train, test) = self.classification_split(&self.logic_dataset()?)?;
        let cs = self.constraint_set()?;
        let y = labels_of(&test)?;
        let baseline = self.fit_baseline(&train)?;
        let base_scores = baseline.class_scores(&test.features)?;
        let breakdown = |s: &ClassScores, suffix: &str, out: &mut BTreeMap<String, f64>| -> Result<()> {
            if !cs.exclusions.is_empty() {
                out.insert(format!("exclusion_{suffix}"), exclusion_violation_rate(s, &cs)?);
            }
            if !cs.implications.is_empty() {
                out.insert(format!("implication_{suffix}"), implication_violation_rate(s, &cs)?);
            }
            Ok(())
        };
        let any_rate = |s: &ClassScores| -> f64 {
            let n = s.n_rows();
            if n == 0 {
                return 0.0;
            }
            let bad = (0..n)
                .filter(|&i| {
                    let row = s.row(i).to_vec();
                    crate::constraints::row_breaks_exclusion(&row, &cs)
                        || crate::constraints::row_breaks_implication(&row, &cs)
                })
                .count();
            bad as f64 / n as f64
        };
        let mut rates = BTreeMap::new();
        breakdown(&base_scores, "before", &mut rates)?;
        let mut m = Metrics {
            accuracy: Some(accuracy(&base_scores.argmax(), &y)?),
            violation_rate_before: Some(any_rate(&base_scores)),
            ..Metrics::default()
        };
        let mut artifact = baseline;
        if self.cfg.mode == Mode::Intrinsic {
            let model = if self.cfg.scenario == Scenario::ConstraintLoss {
                let config = ConstraintLossConfig {
                    lambda: self.p.f64("lambda"),
                    alpha: self.p.f64("alpha"),
                    rounds: self.p.usize("rounds"),
                };
                constraint_aware_fit(&self.base_learner(), &train, &cs, &config)?
            } else {
                logic_guided_fit(&self.base_learner(), &train, &cs)?
            };
            let scores = model.class_scores(&test.features)?;
            breakdown(&scores, "after", &mut rates)?;
            m.accuracy_before = m.accuracy;
            m.accuracy = Some(accuracy(&scores.argmax(), &y)?);
            m.violation_rate_after = Some(any_rate(&scores));
            artifact = model;
        }
        m.violation_breakdown = Some(rates);
        Ok((m, Extra::default(), SavedArtifact::Model(artifact)))
    }

    /// Regressor on `(x, t)`; counterfactuals at every other treatment,
    /// optionally clamped to the factual prediction.
    fn counterfactual(&self) -> Result<Outcome> {
        let ds = gen_treatment_dataset(self.cfg.seed, self.p.usize("n"))?;
        if ds.is_empty() {
            return Err(data("scenario dataset is empty; increase n"));
        }
        let t = ds.treatment.clone().ok_or_else(|| data("dataset has no treatment column"))?;
        let (train_rows, test_rows) = split_indices(ds.n_rows(), self.p.f64("test_fraction"), None, self.cfg.seed);
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(data("train/test split left one side empty; increase n"));
        }
        let with_t = |rows: &[usize], arm: Option<u8>| -> Array2<f64> {
            let x = ds.features.select(Axis(0), rows);
            let col = Array2::from_shape_fn((rows.len(), 1), |(i, _)| f64::from(arm.unwrap_or(t[rows[i]])));
            concatenate(Axis(1), &[x.view(), col.view()]).expect("same row count")
        };
        let y = ds.real_targets()?;
        let train = Dataset::new(
            with_t(&train_rows, None),
            Some(Target::Real(train_rows.iter().map(|&i| y[i]).collect())),
        );
        let model = self.fit_baseline(&train)?;
        let y_test: Vec<f64> = test_rows.iter().map(|&i| y[i]).collect();
        let factual = model.predict_values(&with_t(&test_rows, None))?;
        let arms: Vec<Vec<f64>> = (0..3u8)
            .map(|a| model.predict_values(&with_t(&test_rows, Some(a))))
            .collect::<Result<_>>()?;
        let cf = Array2::from_shape_fn((test_rows.len(), 2), |(i, j)| {
            let own = t[test_rows[i]];
            let alt = (0..3u8).filter(|&a| a != own).nth(j).expect("two alternatives");
            arms[alt as usize][i]
        });
        let config = RepairConfig::new(self.p.f64("tau_cf"))?;
        let factual_mse = mse(&factual, &y_test)?;
        let mut m = Metrics {
            mse: Some(factual_mse),
            violation_rate_before: Some(counterfactual_violation_rate(&factual, &cf, &config)?),
            ..Metrics::default()
        };
        if self.cfg.mode == Mode::Posthoc {
            let repaired = repair_counterfactuals(&factual, &cf, &config)?;
            m.violation_rate_after = Some(counterfactual_violation_rate(&factual, &repaired, &config)?);
            m.factual_mse_before = Some(factual_mse);
            // The repair only touches counterfactual columns; factual
            // predictions are re-scored from the same vector.
            m.factual_mse_after = Some(mse(&factual, &y_test)?);
        }
        Ok((m, Extra::default(), SavedArtifact::Model(model)))
    }

    /// Pooled baseline vs environment ensemble, trained on environments 0
    /// and 1 and scored on 2 and 3.
    fn env_ensemble(&self) -> Result<Outcome> {
        let ds = gen_environment_dataset(self.cfg.seed, self.p.usize("n"))?;
        if ds.is_empty() {
            return Err(data("scenario dataset is empty; increase n"));
        }
        let env = ds.environment.clone().ok_or_else(|| data("dataset has no environment column"))?;
        let rows = |keep: &[u8]| -> Vec<usize> { (0..ds.n_rows()).filter(|&i| keep.contains(&env[i])).collect() };
        let train = ds.select(&rows(&[0, 1]));
        let test_envs = [2u8, 3];
        let family = match self.cfg.model {
            ModelKind::Forest => Family::Forest(self.forest_params()),
            _ => Family::Linear,
        };
        let pooled = match &family {
            Family::Forest(p) => fit_forest(&train, p)?,
            Family::Linear => fit_linear(&train)?,
        };
        let y = ds.real_targets()?;
        let score = |predict: &dyn Fn(&Dataset) -> Result<Vec<f64>>| -> Result<(EnvMse, f64)> {
            let mut per_env = BTreeMap::new();
            let (mut sq, mut count) = (0.0, 0usize);
            for &e in &test_envs {
                let r = rows(&[e]);
                let part = ds.select(&r);
                let pred = predict(&part)?;
                let truth: Vec<f64> = r.iter().map(|&i| y[i]).collect();
                let err = mse(&pred, &truth)?;
                sq += err * r.len() as f64;
                count += r.len();
                per_env.insert(e.to_string(), err);
            }
            let values: Vec<f64> = per_env.values().copied().collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let variance = env_mse_variance(&values);
            Ok((EnvMse { per_env, variance, mean }, sq / count as f64))
        };
        let (base_env, base_mse) = score(&|d: &Dataset| pooled.predict_values(&d.features))?;
        if self.cfg.mode == Mode::Baseline {
            let m = Metrics {
                mse: Some(base_mse),
                env_mse: Some(base_env),
                ..Metrics::default()
            };
            return Ok((m, Extra::default(), SavedArtifact::Model(pooled)));
        }
        let ensemble = env_ensemble_fit(&train, &[0, 1], &family)?;
        let (ens_env, ens_mse) = score(&|d: &Dataset| {
            ensemble.predict(&d.features, d.environment.as_deref().unwrap_or_default())
        })?;
        let m = Metrics {
            mse: Some(ens_mse),
            env_mse: Some(ens_env),
            env_mse_before: Some(base_env),
            ..Metrics::default()
        };
        Ok((m, Extra::default(), SavedArtifact::Ensemble(ensemble)))
    }

    fn hiring(&self) -> Result<Outcome> {
        let ds = gen_hiring_dataset(self.cfg.seed, self.p.usize("n"), &BiasSpec::default())?;
        let (train, test) = self.classification_split(&ds)?;
        let train_labels = labels_of(&train)?;
        let (fit_rows, calib_rows) = split_indices(
            train.n_rows(),
            self.p.f64("validation_split"),
            Some(&train_labels),
            self.cfg.seed.wrapping_add(1),
        );
        if fit_rows.is_empty() || calib_rows.is_empty() {
            return Err(data("calibration split left one side empty; increase n"));
        }
        let fit = train.select(&fit_rows);
        let calib = train.select(&calib_rows);
        let min_size = self.p.usize("min_group_size");
        let (fit_groups, calib_groups, test_groups) = (fit.groups(), calib.groups(), test.groups());
        let y_calib = labels_of(&calib)?;
        let y_test = labels_of(&test)?;

        let baseline = self.fit_baseline(&fit)?;
        let positive = |m: &FittedModel, x: &Array2<f64>| -> Result<Vec<f64>> { Ok(m.class_scores(x)?.column(1)) };
        let decide = |p: &[f64]| -> Vec<usize> { p.iter().map(|&v| usize::from(v > 0.5)).collect() };
        let base_test = decide(&positive(&baseline, &test.features)?);
        let base_report = group_report(&base_test, &y_test, &test_groups, min_size)?;

        // Worst- and best-off groups by baseline calibration-split accuracy.
        let calib_scores = positive(&baseline, &calib.features)?;
        let calib_report = group_report(&decide(&calib_scores), &y_calib, &calib_groups, min_size)?;
        let calibration = CalibrationConfig {
            min_group_size: min_size,
            validation_split: self.p.f64("validation_split"),
            min_accuracy_retention: if self.cfg.mode == Mode::Posthoc {
                self.p.f64("min_accuracy_retention")
            } else {
                0.9
            },
            threshold_step: if self.cfg.mode == Mode::Posthoc {
                self.p.f64("threshold_step")
            } else {
                0.02
            },
            per_group_mode: self.cfg.mode == Mode::Posthoc && self.p.bool("per_group_mode"),
            seed: self.cfg.seed,
            ..CalibrationConfig::default()
        };
        let (worst, best) = extremes(&calib_report, &calibration);

        let mut extra = Extra::default();
        let (treated_decisions, artifact) = match self.cfg.mode {
            Mode::Baseline => (None, baseline),
            Mode::Posthoc => {
                let policy = calibrate_rawlsian_thresholds(&calib_scores, &y_calib, &calib_groups, &calibration)?;
                let decisions = apply_threshold_policy(&positive(&baseline, &test.features)?, &test_groups, &policy)?;
                extra.policy = Some(policy);
                (Some(decisions), baseline)
            }
            Mode::Intrinsic => {
                let model = match self.cfg.model {
                    ModelKind::Mlp => {
                        let config = RawlsianLossConfig {
                            lambda: self.p.f64("lambda"),
                            min_group_size: min_size,
                            ..RawlsianLossConfig::default()
                        };
                        rawlsian_mlp_fit(&fit, &fit_groups, &self.mlp_params(), &config)?
                    }
                    _ => {
                        let config = RawlsianForestConfig {
                            lambda: self.p.f64("lambda"),
                            min_group_size: min_size,
                            ..RawlsianForestConfig::default()
                        };
                        rawlsian_forest_fit(&fit, &fit_groups, &self.forest_params(), &config)?
                    }
                };
                (Some(decide(&positive(&model, &test.features)?)), model)
            }
        };

        let final_report = match &treated_decisions {
            Some(d) => group_report(d, &y_test, &test_groups, min_size)?,
            None => base_report.clone(),
        };
        let mut m = Metrics {
            accuracy: Some(final_report.overall_accuracy),
            positive_rate: Some(final_report.overall_positive_rate),
            disparity: Some(final_report.disparities.clone()),
            ..Metrics::default()
        };
        if treated_decisions.is_some() {
            m.accuracy_before = Some(base_report.overall_accuracy);
            if !worst.is_empty() {
                extra.equity = Some(Equity {
                    deltas: equity_deltas(&base_report, &final_report, &worst, &best)?,
                    worst_off_groups: worst,
                    best_off_groups: best,
                });
            }
        }
        extra.groups = Some(final_report.groups);
        Ok((m, extra, SavedArtifact::Model(artifact)))
    }
}

/// Worst-off groups as selected for calibration, and the same number of
/// eligible groups with the highest accuracy.
fn extremes(report: &GroupReport, config: &CalibrationConfig) -> (Vec<GroupKey>, Vec<GroupKey>) {
    let stats: Vec<(GroupKey, usize, f64)> = report.groups.iter().map(|g| (g.key(), g.size, g.accuracy)).collect();
    let worst = select_worst_off(&stats, config);
    let mut eligible: Vec<&(GroupKey, usize, f64)> =
        stats.iter().filter(|s| s.1 >= config.min_group_size && !worst.contains(&s.0)).collect();
    eligible.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    let best = eligible.iter().take(worst.len()).map(|s| s.0.clone()).collect();
    (worst, best)
}

//! Logical, counterfactual and group-fairness constraints for small
//! self-contained learners, applied either to a trained model's outputs or
//! during training.
//!
//! - [`datagen`]: seeded synthetic datasets for each experiment.
//! - [`learners`]: bagged trees, linear and logistic models, a small MLP.
//! - [`constraints`]: constraint sets and violation measures.
//! - [`enforcers`]: post-hoc repairs (exclusion, implication transfer,
//!   counterfactual clamp) and worst-off group threshold calibration.
//! - [`intrinsic`]: constraint-aware and logic-guided fitting, group-aware
//!   impurity and loss, and the environment ensemble.
//! - [`metrics`]: accuracy, MSE, per-group reports and equity deltas.
//! - [`harness`]: end-to-end runs and the JSON report behind the `normative`
//!   binary.
//!
//! Runnable examples live in `examples/`: `exclusion_repair`,
//! `severity_hierarchy`, `constraint_loss`, `logic_layer`,
//! `counterfactual_clamp`, `environment_ensemble`, `rawlsian_hiring` and
//! `harness_run`.

pub mod constraints;
pub mod data;
pub mod datagen;
pub mod enforcers;
mod error;
pub mod harness;
pub mod intrinsic;
pub mod learners;
pub mod metrics;
pub mod scores;

pub use error::{Error, Result};

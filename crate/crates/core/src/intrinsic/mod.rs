//! Training-time modifications: constraint-aware and logic-guided fitting,
//! group-aware impurity and loss, and the environment ensemble.

mod ensemble;
mod logic;
mod rawlsian;

pub use ensemble::{env_ensemble_fit, EnvEnsemble, Family};
pub use logic::{
    constraint_aware_fit, logic_guided_fit, logic_layer, sample_weight, BaseLearner, ConstraintLossConfig,
    ConstraintPenaltyLoss, ExclusionPenalty, LogicLayerLoss,
};
pub use rawlsian::{
    rawlsian_forest_fit, rawlsian_impurity, rawlsian_mlp_fit, rawlsian_objective, RawlsianForestConfig,
    RawlsianImpurity, RawlsianLoss, RawlsianLossConfig,
};

//! Attribute-inference attacks and vulnerability ranking.

pub mod angular;
pub mod confidence;
pub mod csmia;
pub mod disparity;
pub mod imputation;
pub mod lomia;
pub mod neuron;
pub mod result;
pub mod targeted;

pub use angular::{angular_difference, AngularDifference, RegressionLine};
pub use confidence::{generate_confidence_matrix, ConfidenceMatrix, QueryGrid};
pub use csmia::csmia;
pub use disparity::{baseline_ranking_via_aux, disparity_inference, RankEntry, Ranking, RankingOptions};
pub use imputation::imputation_attack;
pub use lomia::{lomia, LomiaOptions};
pub use neuron::{neuron_importance_attack, NeuronOptions};
pub use result::{AttackResult, CaseTag};
pub use targeted::{
    targeted_imputation_baseline, targeted_nested, targeted_single, BaseAttack, ImputationMode,
    TargetSubset, TargetedAttackConfig,
};

//! Attack success, disparity, rank agreement and group fairness.

pub mod asr;
pub mod fairness;
pub mod rank;

pub use asr::{asrd, asrd_from_result, attack_success_rate, group_asr, ASRReport};
pub use fairness::{fairness_from_predictions, fairness_metrics, FairnessReport, GroupRates};
pub use rank::{kendall_tau, kendall_tau_items, rank_agreement, spearman_rho, spearman_rho_items, RankCorrelation};

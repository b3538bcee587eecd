//! Disparity mitigation by correlation-balanced subsampling and MI-regularized training.

pub mod bcorr;
pub mod damir;

pub use bcorr::{bcorr, BCorrGroup, BCorrPlan};
pub use damir::{damir_train, soft_mutual_information, DamirConfig, MiEstimator, MiRegularizer, VulnerableGroup};

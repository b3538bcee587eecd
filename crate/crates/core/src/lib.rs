//! Disparate-vulnerability auditing for tabular classifiers.
//!
//! The crate is organised around the audit pipeline:
//!
//! * [`data`]: schemas, datasets, correlation-controlled sampling, synthetic pools, CSV ingestion.
//! * [`models`]: the feed-forward target/attack models and their black-box and white-box surfaces.
//! * [`attacks`]: confidence matrices, angular difference, CSMIA/LOMIA/imputation/neuron-importance,
//!   disparity inference and targeted attacks.
//! * [`metrics`]: attack success, ASRD, rank correlation and group-fairness gaps.
//! * [`defense`]: BCorr resampling and DAMIR regularised training.
//! * [`harness`]: config-driven experiments and report bundles.

pub mod attacks;
pub mod data;
pub mod defense;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rng;

pub use error::{Error, Result};

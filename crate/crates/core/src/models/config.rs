use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Network shape and Adam training hyperparameters.
///
/// `epochs` counts full passes over the training data in minibatches of
/// `batch_size` (default `min(200, n)`), reshuffled every epoch. There is no early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// L2 penalty on weights (not biases), scaled by the batch size.
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_layers: vec![32, 16, 8],
            activation: Activation::Relu,
            learning_rate: 0.001,
            epochs: 500,
            batch_size: None,
            seed: 0,
            l2: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl ModelConfig {
    pub fn with_seed(seed: u64) -> Self {
        ModelConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(200).min(n).max(1)
    }
}

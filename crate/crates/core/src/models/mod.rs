//! Feed-forward classifiers used as target, attack and imputation models.

pub mod classifier;
pub mod config;
pub mod encoding;
pub mod mlp;
pub mod query;

pub use classifier::{train_attack_model, train_target_model, AttackModel, Classifier, Prediction, TargetModel};
pub use config::{Activation, ModelConfig};
pub use encoding::InputEncoding;
pub use mlp::{Gradients, Mlp, OutputRegularizer};
pub use query::{BlackBox, QueryCounter};

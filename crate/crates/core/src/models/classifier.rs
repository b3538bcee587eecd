use std::ops::Deref;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::encoding::InputEncoding;
use super::mlp::{Mlp, OutputRegularizer};
use super::query::BlackBox;
use crate::data::{AttributeSchema, Tabular, Value};
use crate::error::{Error, Result};

const CHECKPOINT_FORMAT: &str = "dvaudit-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Category code of the predicted value.
    pub label: u32,
    /// Probabilities ordered like the predicted attribute's values.
    pub confidences: Vec<f64>,
}

impl Prediction {
    fn from_probs(confidences: Vec<f64>) -> Self {
        let mut label = 0;
        for (k, &p) in confidences.iter().enumerate() {
            if p > confidences[label] {
                label = k;
            }
        }
        Prediction {
            label: label as u32,
            confidences,
        }
    }

    pub fn confidence(&self) -> f64 {
        self.confidences[self.label as usize]
    }
}

/// An MLP predicting one categorical attribute from all the others it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    schema: Arc<AttributeSchema>,
    target: usize,
    config: ModelConfig,
    encoding: InputEncoding,
    network: Mlp,
}

impl Classifier {
    pub fn train<T: Tabular + ?Sized>(
        ds: &T,
        target: usize,
        inputs: &[usize],
        config: &ModelConfig,
        reg: Option<&dyn OutputRegularizer>,
    ) -> Result<Self> {
        config.validate()?;
        if ds.is_empty() {
            return Err(Error::InsufficientData("empty training set".into()));
        }
        let schema = ds.schema_arc().clone();
        let attr = schema.attribute(target);
        if !attr.is_categorical() {
            return Err(Error::Schema(format!("`{}` is not categorical", attr.name)));
        }
        let encoding = InputEncoding::fit(ds, inputs)?;
        let x = encoding.encode_all(ds)?;
        let y: Vec<u32> = (0..ds.len()).map(|i| ds.categorical(i, target)).collect();
        let mut network = Mlp::new(encoding.dim(), &config.hidden_layers, attr.values.len(), config.seed);
        let curve = network.fit(&x, &y, config, reg)?;
        log::debug!(
            "trained `{}` model on {} records, final loss {:.5}",
            attr.name,
            ds.len(),
            curve.last().copied().unwrap_or(f64::NAN)
        );
        Ok(Classifier {
            schema,
            target,
            config: config.clone(),
            encoding,
            network,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Mlp {
        &self.network
    }

    /// Same classifier with replaced weights of identical shape.
    pub fn with_network(self, network: Mlp) -> Result<Self> {
        let same = network.layers.len() == self.network.layers.len()
            && network
                .layers
                .iter()
                .zip(&self.network.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs && a.weights.len() == b.weights.len());
        if !same {
            return Err(Error::Config("replacement network has a different shape".into()));
        }
        Ok(Classifier { network, ..self })
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn output_labels(&self) -> &[String] {
        &self.schema.attribute(self.target).values
    }

    pub fn predict(&self, values: &[Value], record_id: Option<u64>) -> Result<Prediction> {
        let x = self.encoding.encode(values, record_id)?;
        Ok(Prediction::from_probs(self.network.predict_proba(&x)))
    }

    pub fn hidden_activations(&self, values: &[Value], record_id: Option<u64>) -> Result<Vec<Vec<f64>>> {
        let x = self.encoding.encode(values, record_id)?;
        Ok(self.network.forward(&x).0)
    }

    /// Fraction of records whose target attribute is predicted correctly.
    pub fn accuracy<T: Tabular + ?Sized>(&self, ds: &T) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::InsufficientData("empty evaluation set".into()));
        }
        let mut correct = 0usize;
        for (i, r) in ds.records().iter().enumerate() {
            if self.predict(&r.values, Some(r.id))?.label == ds.categorical(i, self.target) {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.len() as f64)
    }

    fn checkpoint_bytes(&self, role: &str) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Out<'a> {
            format: &'a str,
            version: u32,
            role: &'a str,
            model: &'a Classifier,
        }
        let mut bytes = serde_json::to_vec(&Out {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            role,
            model: self,
        })?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    fn from_checkpoint(bytes: &[u8], role: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct In {
            format: String,
            version: u32,
            role: String,
            model: Classifier,
        }
        let c: In = serde_json::from_slice(bytes)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Unsupported(format!(
                "checkpoint format `{}` version {}",
                c.format, c.version
            )));
        }
        if c.role != role {
            return Err(Error::Config(format!("checkpoint holds a {} model, expected {role}", c.role)));
        }
        Ok(c.model)
    }
}

macro_rules! model_role {
    ($name:ident, $role:literal) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Classifier);

        impl Deref for $name {
            type Target = Classifier;
            fn deref(&self) -> &Classifier {
                &self.0
            }
        }

        impl $name {
            pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
                self.0.checkpoint_bytes($role)
            }

            pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
                Classifier::from_checkpoint(bytes, $role).map($name)
            }

            pub fn save(&self, path: &Path) -> Result<()> {
                std::fs::write(path, self.to_checkpoint_bytes()?).map_err(|e| Error::file(path, e))
            }

            pub fn load(path: &Path) -> Result<Self> {
                let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
                Self::from_checkpoint_bytes(&bytes)
            }

            /// SHA-256 of the checkpoint bytes, hex encoded.
            pub fn hash(&self) -> Result<String> {
                Ok(hex::encode(Sha256::digest(self.to_checkpoint_bytes()?)))
            }

            pub fn into_inner(self) -> Classifier {
                self.0
            }
        }
    };
}

model_role!(TargetModel, "target");
model_role!(AttackModel, "attack");

impl TargetModel {
    pub fn from_classifier(c: Classifier) -> Self {
        TargetModel(c)
    }
}

impl AttackModel {
    /// Predicted sensitive value for a record; its own sensitive slot is ignored.
    pub fn infer(&self, values: &[Value], record_id: Option<u64>) -> Result<u32> {
        Ok(self.predict(values, record_id)?.label)
    }
}

impl BlackBox for TargetModel {
    fn schema(&self) -> &AttributeSchema {
        &self.0.schema
    }

    fn query(&self, values: &[Value], record_id: Option<u64>) -> Result<Prediction> {
        self.0.predict(values, record_id)
    }
}

pub(crate) fn target_inputs(schema: &AttributeSchema) -> Vec<usize> {
    (0..schema.len()).filter(|&i| i != schema.output_index()).collect()
}

pub(crate) fn attack_inputs(schema: &AttributeSchema) -> Vec<usize> {
    (0..schema.len()).filter(|&i| i != schema.sensitive_index()).collect()
}

/// Trains a model predicting the output attribute from every other attribute.
pub fn train_target_model<T: Tabular + ?Sized>(ds: &T, config: &ModelConfig) -> Result<TargetModel> {
    let schema = ds.schema();
    Classifier::train(ds, schema.output_index(), &target_inputs(schema), config, None).map(TargetModel)
}

/// Trains a model predicting the sensitive attribute from the non-sensitive attributes and label.
pub fn train_attack_model<T: Tabular + ?Sized>(ds: &T, config: &ModelConfig) -> Result<AttackModel> {
    let schema = ds.schema();
    let k = schema.sensitive_index();
    let first = ds.records().first().and_then(|r| r.values[k].as_cat());
    if first.is_none() || ds.records().iter().all(|r| r.values[k].as_cat() == first) {
        return Err(Error::Degenerate(
            "attack dataset holds fewer than two sensitive classes".into(),
        ));
    }
    Classifier::train(ds, k, &attack_inputs(schema), config, None).map(AttackModel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Attribute, Dataset, Record};
    use rand::Rng as _;

    fn separable(n: usize) -> Dataset {
        let schema = Arc::new(
            AttributeSchema::new(
                vec![
                    Attribute::numeric("a"),
                    Attribute::numeric("b"),
                    Attribute::categorical("s", &["no", "yes"]),
                    Attribute::categorical("y", &["false", "true"]),
                ],
                "s",
                "y",
                "yes",
                "true",
            )
            .unwrap(),
        );
        let mut rng = crate::rng::rng_from(1);
        let recs = (0..n)
            .map(|i| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let y = u32::from(a + b > 0.0);
                Record {
                    id: i as u64,
                    values: vec![Value::Num(a), Value::Num(b), Value::Cat(y), Value::Cat(y)],
                }
            })
            .collect();
        Dataset::new(schema, recs).unwrap()
    }

    fn quick() -> ModelConfig {
        ModelConfig {
            epochs: 150,
            learning_rate: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn separable_training_accuracy() {
        let ds = separable(600).without_sensitive();
        let ds = ds.with_sensitive(&vec![0; 600]).unwrap();
        let m = train_target_model(&ds, &quick()).unwrap();
        assert!(m.accuracy(&ds).unwrap() >= 0.99);
    }

    #[test]
    fn copy_task_attack_model() {
        let ds = separable(400);
        let m = train_attack_model(&ds, &quick()).unwrap();
        let hits = (0..ds.len())
            .filter(|&i| m.infer(&ds.records()[i].values, None).unwrap() == ds.sensitive(i))
            .count();
        assert!(hits as f64 / 400.0 >= 0.99);
    }

    #[test]
    fn single_class_attack_set_is_degenerate() {
        let ds = separable(50).filter(|r| r.values[2] == Value::Cat(1));
        assert!(matches!(train_attack_model(&ds, &quick()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn queries_are_pure_probability_vectors() {
        let ds = separable(200);
        let m = train_target_model(&ds, &ModelConfig { epochs: 3, ..quick() }).unwrap();
        for r in ds.records() {
            let p = m.query(&r.values, Some(r.id)).unwrap();
            let s: f64 = p.confidences.iter().sum();
            assert!((s - 1.0).abs() <= 1e-9);
            assert!(p.confidences.iter().all(|&c| c >= 0.0));
            let best = if p.confidences[1] > p.confidences[0] { 1 } else { 0 };
            assert_eq!(p.label, best);
            assert_eq!(p, m.query(&r.values, Some(r.id)).unwrap());
        }
    }

    #[test]
    fn default_hidden_widths_and_consistency() {
        let ds = separable(100);
        let m = train_target_model(&ds, &ModelConfig { epochs: 2, ..Default::default() }).unwrap();
        let mut worst: f64 = 0.0;
        for r in ds.records() {
            let acts = m.hidden_activations(&r.values, None).unwrap();
            assert_eq!(acts.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 16, 8]);
            let q = m.network().output_from_last_hidden(&acts[2]);
            let p = m.query(&r.values, None).unwrap();
            for (a, b) in q.iter().zip(&p.confidences) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-9);
    }

    #[test]
    fn zero_weights_give_zero_activations() {
        let ds = separable(20);
        let m = train_target_model(&ds, &ModelConfig { epochs: 1, ..Default::default() }).unwrap();
        let mut c = m.into_inner();
        for l in &mut c.network.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let acts = c.hidden_activations(&ds.records()[0].values, None).unwrap();
        assert!(acts.iter().flatten().all(|&a| a == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let ds = separable(100);
        let m = train_target_model(&ds, &ModelConfig { epochs: 3, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = TargetModel::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash().unwrap(), m.hash().unwrap());
        for r in ds.records() {
            assert_eq!(back.query(&r.values, None).unwrap(), m.query(&r.values, None).unwrap());
        }
        assert!(AttackModel::load(&p).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let ds = separable(150);
        let cfg = ModelConfig { epochs: 4, seed: 3, ..Default::default() };
        let a = train_target_model(&ds, &cfg).unwrap();
        let b = train_target_model(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

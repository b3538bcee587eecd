use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Tabular};
use crate::error::{Error, Result};
use crate::models::classifier::target_inputs;
use crate::models::{train_target_model, Classifier, ModelConfig, OutputRegularizer, TargetModel};

// Probabilities are clamped here before taking logs.
const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerableGroup {
    pub attr: String,
    pub value: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiEstimator {
    /// Joint of sensitive value and predicted class from batch-mean softmax outputs.
    #[default]
    SoftPlugIn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DamirConfig {
    pub beta: f64,
    pub vulnerable_group: VulnerableGroup,
    #[serde(default)]
    pub mi_estimator: MiEstimator,
    #[serde(default)]
    pub base: ModelConfig,
}

impl DamirConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta {} must be finite and non-negative", self.beta)));
        }
        self.base.validate()
    }
}

/// Soft plug-in estimate of I(S; Y-hat) from per-record class probabilities `probs`
/// (`sens.len() x n_out`) and sensitive codes `sens` in `0..n_s`.
pub fn soft_mutual_information(probs: &[f64], sens: &[u32], n_out: usize, n_s: usize) -> f64 {
    mi_and_gradient(probs, sens, n_out, n_s, None)
}

fn mi_and_gradient(probs: &[f64], sens: &[u32], n_out: usize, n_s: usize, grad: Option<&mut [f64]>) -> f64 {
    let b = sens.len();
    if b == 0 {
        return 0.0;
    }
    let inv_b = 1.0 / b as f64;
    let mut joint = vec![0.0; n_s * n_out];
    let mut ps = vec![0.0; n_s];
    let mut pk = vec![0.0; n_out];
    for (i, &s) in sens.iter().enumerate() {
        let s = s as usize;
        ps[s] += inv_b;
        for k in 0..n_out {
            let p = probs[i * n_out + k] * inv_b;
            joint[s * n_out + k] += p;
            pk[k] += p;
        }
    }
    let log = |p: f64| p.max(P_FLOOR).ln();
    let mut mi = 0.0;
    for s in 0..n_s {
        for k in 0..n_out {
            let j = joint[s * n_out + k];
            if j > 0.0 {
                mi += j * (log(j) - log(ps[s]) - log(pk[k]));
            }
        }
    }
    if let Some(grad) = grad {
        for (i, &s) in sens.iter().enumerate() {
            let s = s as usize;
            for k in 0..n_out {
                grad[i * n_out + k] = inv_b * (log(joint[s * n_out + k]) - log(ps[s]) - log(pk[k]));
            }
        }
    }
    mi.max(0.0)
}

/// `beta * I(S; Y-hat)` restricted to the vulnerable-group rows of each batch.
pub struct MiRegularizer {
    beta: f64,
    /// Per training row: `Some(sensitive code)` when the row is in the vulnerable group.
    rows: Vec<Option<u32>>,
    n_s: usize,
}

impl MiRegularizer {
    pub fn new<T: Tabular + ?Sized>(ds: &T, group: &VulnerableGroup, beta: f64) -> Result<Self> {
        let schema = ds.schema();
        let attr = schema.index_of(&group.attr)?;
        if attr == schema.output_index() {
            return Err(Error::Config("the vulnerable group cannot be defined by the output".into()));
        }
        let code = schema.attribute(attr).value_index(&group.value).ok_or_else(|| {
            Error::Config(format!("`{}` has no value `{}`", group.attr, group.value))
        })?;
        let k = schema.sensitive_index();
        let rows: Vec<Option<u32>> = ds
            .records()
            .iter()
            .map(|r| {
                (r.values[attr].as_cat() == Some(code))
                    .then(|| r.values[k].as_cat())
                    .flatten()
            })
            .collect();
        if rows.iter().all(Option::is_none) {
            return Err(Error::Config(format!(
                "vulnerable group {}={} is empty",
                group.attr, group.value
            )));
        }
        Ok(MiRegularizer {
            beta,
            rows,
            n_s: schema.sensitive_values().len(),
        })
    }
}

impl OutputRegularizer for MiRegularizer {
    fn penalty(&self, rows: &[usize], probs: &[f64], n_out: usize, grad_probs: &mut [f64]) -> f64 {
        let mut members = Vec::new();
        let mut sens = Vec::new();
        let mut sub = Vec::new();
        for (b, &r) in rows.iter().enumerate() {
            if let Some(s) = self.rows[r] {
                members.push(b);
                sens.push(s);
                sub.extend_from_slice(&probs[b * n_out..(b + 1) * n_out]);
            }
        }
        if members.is_empty() {
            return 0.0;
        }
        let mut g = vec![0.0; sub.len()];
        let mi = mi_and_gradient(&sub, &sens, n_out, self.n_s, Some(&mut g));
        for (j, &b) in members.iter().enumerate() {
            for k in 0..n_out {
                grad_probs[b * n_out + k] += self.beta * g[j * n_out + k];
            }
        }
        self.beta * mi
    }
}

/// Trains a target model whose loss adds `beta` times the vulnerable group's soft MI between
/// the sensitive value and the prediction. With `beta = 0` this is plain target training.
pub fn damir_train(ds: &Dataset, cfg: &DamirConfig) -> Result<TargetModel> {
    cfg.validate()?;
    let reg = MiRegularizer::new(ds, &cfg.vulnerable_group, cfg.beta)?;
    if cfg.beta == 0.0 {
        return train_target_model(ds, &cfg.base);
    }
    let schema = ds.schema();
    let c = Classifier::train(ds, schema.output_index(), &target_inputs(schema), &cfg.base, Some(&reg))?;
    Ok(TargetModel::from_classifier(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_disparate_dataset, train_test_split, SyntheticSpec};

    #[test]
    fn independent_predictions_have_zero_mi() {
        let probs = [0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7];
        assert!(soft_mutual_information(&probs, &[0, 1, 0, 1], 2, 2) <= 1e-6);
        let probs = [0.9, 0.1, 0.2, 0.8, 0.9, 0.1, 0.2, 0.8];
        assert!(soft_mutual_information(&probs, &[0, 0, 1, 1], 2, 2) <= 1e-12);
    }

    #[test]
    fn perfectly_dependent_predictions() {
        let probs = [1.0, 0.0, 0.0, 1.0];
        let mi = soft_mutual_information(&probs, &[0, 1], 2, 2);
        assert!((mi - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn mi_is_non_negative_on_random_batches() {
        use rand::Rng as _;
        let mut rng = crate::rng::stream(4, "mi");
        for _ in 0..200 {
            let b = rng.random_range(1..20);
            let mut probs = Vec::new();
            let mut sens = Vec::new();
            for _ in 0..b {
                let p: f64 = rng.random();
                probs.extend([p, 1.0 - p]);
                sens.push(rng.random_range(0..3));
            }
            assert!(soft_mutual_information(&probs, &sens, 2, 3) >= 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let probs = vec![0.2, 0.5, 0.3, 0.6, 0.1, 0.3, 0.25, 0.25, 0.5, 0.7, 0.2, 0.1];
        let sens = [0, 1, 1, 0];
        let mut g = vec![0.0; probs.len()];
        mi_and_gradient(&probs, &sens, 3, 2, Some(&mut g));
        let h = 1e-6;
        for i in 0..probs.len() {
            let mut up = probs.clone();
            let mut down = probs.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (mi_and_gradient(&up, &sens, 3, 2, None) - mi_and_gradient(&down, &sens, 3, 2, None)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "entry {i}: fd {fd} analytic {}", g[i]);
        }
    }

    fn data() -> Dataset {
        build_disparate_dataset(&SyntheticSpec::with_correlations(&[0.6, 0.05], 300, 9)).unwrap()
    }

    fn config(beta: f64) -> DamirConfig {
        DamirConfig {
            beta,
            vulnerable_group: VulnerableGroup {
                attr: "group".into(),
                value: "g0".into(),
            },
            mi_estimator: MiEstimator::SoftPlugIn,
            base: ModelConfig {
                epochs: 30,
                ..ModelConfig::default()
            },
        }
    }

    #[test]
    fn zero_beta_is_plain_training() {
        let ds = data();
        let a = damir_train(&ds, &config(0.0)).unwrap();
        let b = train_target_model(&ds, &config(0.0).base).unwrap();
        assert_eq!(a.to_checkpoint_bytes().unwrap(), b.to_checkpoint_bytes().unwrap());
    }

    #[test]
    fn positive_beta_changes_and_reduces_group_mi() {
        let ds = data();
        let (train, _) = train_test_split(&ds, 500, 1).unwrap();
        let plain = damir_train(&train, &config(0.0)).unwrap();
        let strong = damir_train(&train, &config(2.0)).unwrap();
        assert_ne!(plain.to_checkpoint_bytes().unwrap(), strong.to_checkpoint_bytes().unwrap());
        let group_mi = |m: &TargetModel| {
            let g = train.schema().index_of("group").unwrap();
            let mut probs = Vec::new();
            let mut sens = Vec::new();
            for (i, r) in train.records().iter().enumerate() {
                if r.values[g].as_cat() == Some(0) {
                    probs.extend(m.predict(&r.values, Some(r.id)).unwrap().confidences);
                    sens.push(train.sensitive(i));
                }
            }
            soft_mutual_information(&probs, &sens, 2, 2)
        };
        assert!(group_mi(&strong) < group_mi(&plain));
    }

    #[test]
    fn unknown_or_empty_group_is_a_config_error() {
        let ds = data();
        let mut cfg = config(0.1);
        cfg.vulnerable_group.value = "g9".into();
        assert!(matches!(damir_train(&ds, &cfg), Err(Error::Config(_))));
        let mut cfg = config(-0.1);
        cfg.vulnerable_group.value = "g0".into();
        assert!(matches!(damir_train(&ds, &cfg), Err(Error::Config(_))));
    }
}

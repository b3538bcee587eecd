use serde::{Deserialize, Serialize};

use super::result::{AttackResult, CaseTag};
use crate::data::{Dataset, NsDataset, Tabular, Value};
use crate::error::{Error, Result};
use crate::models::TargetModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronOptions {
    pub top_k: usize,
    /// Fixed decision threshold; fitted on the auxiliary data when absent.
    pub threshold: Option<f64>,
}

impl Default for NeuronOptions {
    fn default() -> Self {
        NeuronOptions {
            top_k: 10,
            threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronSelection {
    /// Flat neuron index over all hidden layers, with its correlation.
    pub neurons: Vec<(usize, f64)>,
    pub threshold: f64,
}

fn flat_activations(model: &TargetModel, values: &[Value], id: u64) -> Result<Vec<f64>> {
    Ok(model.hidden_activations(values, Some(id))?.concat())
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Mean weighted activation over every sensitive candidate, since the target's own value is
/// unknown to the adversary.
fn score(model: &TargetModel, sel: &[(usize, f64)], values: &[Value], id: u64) -> Result<f64> {
    let k = model.schema().sensitive_index();
    let n_s = model.schema().sensitive_values().len();
    let mut v = values.to_vec();
    let mut total = 0.0;
    for s in 0..n_s {
        v[k] = Value::Cat(s as u32);
        let acts = flat_activations(model, &v, id)?;
        total += sel.iter().map(|&(j, w)| w * acts[j]).sum::<f64>();
    }
    Ok(total / n_s as f64)
}

/// Threshold maximising accuracy of `score > t` against `truth`, over midpoints of sorted scores.
fn best_threshold(scores: &[f64], truth: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Start with everything predicted positive.
    let mut correct = truth.iter().filter(|&&t| t).count() as i64;
    let mut best = (correct, f64::NEG_INFINITY);
    for w in 0..idx.len() {
        correct += if truth[idx[w]] { -1 } else { 1 };
        if w + 1 < idx.len() && scores[idx[w]] == scores[idx[w + 1]] {
            continue;
        }
        let t = if w + 1 < idx.len() {
            0.5 * (scores[idx[w]] + scores[idx[w + 1]])
        } else {
            f64::INFINITY
        };
        if correct > best.0 {
            best = (correct, t);
        }
    }
    best.1
}

pub fn select_neurons(model: &TargetModel, aux: &Dataset, opts: &NeuronOptions) -> Result<NeuronSelection> {
    let width: usize = model.config().hidden_layers.iter().sum();
    if width < opts.top_k {
        return Err(Error::Config(format!(
            "{width} hidden neurons, {} requested",
            opts.top_k
        )));
    }
    if aux.is_empty() {
        return Err(Error::InsufficientData("empty auxiliary data".into()));
    }
    let sp = aux.schema().positive_sensitive();
    let truth: Vec<bool> = (0..aux.len()).map(|i| aux.sensitive(i) == sp).collect();
    let s_num: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let acts = aux
        .records()
        .iter()
        .map(|r| flat_activations(model, &r.values, r.id))
        .collect::<Result<Vec<_>>>()?;
    let mut corr: Vec<(usize, f64)> = (0..width)
        .map(|j| {
            let col: Vec<f64> = acts.iter().map(|a| a[j]).collect();
            (j, pearson(&col, &s_num))
        })
        .collect();
    corr.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    corr.truncate(opts.top_k);
    let threshold = match opts.threshold {
        Some(t) => t,
        None => {
            let scores = aux
                .records()
                .iter()
                .map(|r| score(model, &corr, &r.values, r.id))
                .collect::<Result<Vec<_>>>()?;
            best_threshold(&scores, &truth)
        }
    };
    Ok(NeuronSelection {
        neurons: corr,
        threshold,
    })
}

/// White-box attack on the hidden neurons most correlated with the sensitive value in `aux`.
pub fn neuron_importance_attack(
    model: &TargetModel,
    aux: &Dataset,
    target: &NsDataset,
    opts: &NeuronOptions,
) -> Result<AttackResult> {
    let sel = select_neurons(model, aux, opts)?;
    let schema = model.schema();
    let pos = schema.positive_sensitive();
    // Non-positive prediction: the first other sensitive value.
    let neg = (0..schema.sensitive_values().len() as u32)
        .find(|&s| s != pos)
        .expect("at least two sensitive values");
    let n_s = schema.sensitive_values().len() as u64;
    let predictions = target
        .records()
        .iter()
        .map(|r| Ok(if score(model, &sel.neurons, &r.values, r.id)? > sel.threshold { pos } else { neg }))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackResult {
        attack: "neuron-importance".into(),
        record_ids: target.ids(),
        cases: vec![CaseTag::NeuronThreshold; predictions.len()],
        predictions,
        coverage: 1.0,
        queries: target.len() as u64 * n_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_disparate_dataset;
    use crate::data::synth::SyntheticSpec;
    use crate::models::{train_target_model, ModelConfig};

    #[test]
    fn threshold_search_on_separable_scores() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.9];
        let t = [false, false, false, true, true];
        let th = best_threshold(&s, &t);
        assert!(th > 0.4 && th < 0.8);
        assert_eq!(best_threshold(&[1.0, 2.0], &[true, true]), f64::NEG_INFINITY);
    }

    fn setup(c: f64) -> (TargetModel, Dataset, Dataset) {
        let spec = SyntheticSpec::with_correlations(&[c], 1000, 21);
        let train = build_disparate_dataset(&spec).unwrap();
        let aux = build_disparate_dataset(&SyntheticSpec { seed: 22, ..spec }).unwrap();
        let cfg = ModelConfig {
            epochs: 60,
            seed: 1,
            ..Default::default()
        };
        (train_target_model(&train, &cfg).unwrap(), aux, train)
    }

    #[test]
    fn sensitive_copying_neuron_ranks_first() {
        let (model, aux, _) = setup(0.0);
        let mut c = model.into_inner();
        let mut net = c.network().clone();
        // Make neuron 0 of the first layer equal to the one-hot "yes" input of the sensitive value.
        let schema = c.schema().clone();
        let mut offset = 0;
        for col in c.encoding().columns() {
            match col {
                crate::models::encoding::ColumnEncoding::OneHot { attr, width } => {
                    if *attr == schema.sensitive_index() {
                        break;
                    }
                    offset += width;
                }
                _ => offset += 1,
            }
        }
        let yes = offset + schema.positive_sensitive() as usize;
        let l0 = &mut net.layers[0];
        for i in 0..l0.inputs {
            l0.weights[i * l0.outputs] = if i == yes { 1.0 } else { 0.0 };
        }
        l0.bias[0] = 0.0;
        c = c.with_network(net).unwrap();
        let model = TargetModel::from_classifier(c);
        let sel = select_neurons(&model, &aux, &NeuronOptions::default()).unwrap();
        assert_eq!(sel.neurons[0].0, 0);
        assert!((sel.neurons[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_threshold_predicts_negative() {
        let (model, aux, train) = setup(-0.5);
        let opts = NeuronOptions {
            threshold: Some(f64::INFINITY),
            ..Default::default()
        };
        let r = neuron_importance_attack(&model, &aux, &train.without_sensitive(), &opts).unwrap();
        assert!(r.predictions.iter().all(|&p| p == 0));
        let neg = (0..train.len()).filter(|&i| train.sensitive(i) == 0).count();
        let acc = (0..train.len()).filter(|&i| r.predictions[i] == train.sensitive(i)).count();
        assert_eq!(acc, neg);
    }

    #[test]
    fn too_few_neurons_is_config_error() {
        let spec = SyntheticSpec::with_correlations(&[0.0], 100, 2);
        let ds = build_disparate_dataset(&spec).unwrap();
        let m = train_target_model(
            &ds,
            &ModelConfig {
                hidden_layers: vec![4, 2],
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            neuron_importance_attack(&m, &ds, &ds.without_sensitive(), &NeuronOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn strong_correlation_beats_majority_guess() {
        let (model, aux, train) = setup(0.9);
        let r = neuron_importance_attack(&model, &aux, &train.without_sensitive(), &NeuronOptions::default()).unwrap();
        let acc = (0..train.len()).filter(|&i| r.predictions[i] == train.sensitive(i)).count() as f64
            / train.len() as f64;
        let pos = (0..train.len()).filter(|&i| train.sensitive(i) == 1).count() as f64 / train.len() as f64;
        assert!(acc > pos.max(1.0 - pos), "{acc}");
    }
}

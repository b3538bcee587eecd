use super::result::{AttackResult, CaseTag};
use crate::data::{Dataset, NsDataset, Tabular};
use crate::error::Result;
use crate::models::{train_attack_model, AttackModel, ModelConfig};

pub(crate) fn predict_all(model: &AttackModel, target: &NsDataset, total: usize) -> Result<AttackResult> {
    let predictions = target
        .records()
        .iter()
        .map(|r| model.infer(&r.values, Some(r.id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackResult {
        attack: "imputation".into(),
        record_ids: target.ids(),
        cases: vec![CaseTag::Imputed; predictions.len()],
        predictions,
        coverage: if total == 0 { 0.0 } else { target.len() as f64 / total as f64 },
        queries: 0,
    })
}

/// Trains a sensitive-value model on `aux` and applies it to the target records. The target
/// model is never queried.
pub fn imputation_attack(aux: &Dataset, target: &NsDataset, config: &ModelConfig) -> Result<AttackResult> {
    let model = train_attack_model(aux, config)?;
    predict_all(&model, target, target.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::SyntheticSpec;
    use crate::data::build_disparate_dataset;
    use crate::error::Error;

    #[test]
    fn aux_copy_is_memorised() {
        let mut spec = SyntheticSpec::with_correlations(&[-0.8], 300, 4);
        spec.class_separation = 3.0;
        let ds = build_disparate_dataset(&spec).unwrap();
        let cfg = ModelConfig {
            epochs: 300,
            learning_rate: 0.01,
            ..Default::default()
        };
        let r = imputation_attack(&ds, &ds.without_sensitive(), &cfg).unwrap();
        assert_eq!(r.queries, 0);
        let hits = (0..ds.len()).filter(|&i| r.predictions[i] == ds.sensitive(i)).count();
        assert!(hits as f64 / ds.len() as f64 >= 0.95, "{hits}");
    }

    #[test]
    fn single_class_aux_is_degenerate() {
        let ds = build_disparate_dataset(&SyntheticSpec::with_correlations(&[0.0], 40, 1)).unwrap();
        let one = ds.filter(|r| r.values[ds.schema().sensitive_index()].as_cat() == Some(1));
        assert!(matches!(
            imputation_attack(&one, &ds.without_sensitive(), &ModelConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }
}

use serde::{Deserialize, Serialize};

use super::confidence::QueryGrid;
use super::csmia::decide;
use super::result::{AttackResult, CaseTag};
use crate::data::{NsDataset, Tabular};
use crate::error::{Error, Result};
use crate::models::{train_attack_model, BlackBox, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LomiaOptions {
    pub model: ModelConfig,
    /// Minimum number of directly inferred records needed to train the attack model.
    pub min_attack_set: usize,
}

impl Default for LomiaOptions {
    fn default() -> Self {
        LomiaOptions {
            model: ModelConfig::default(),
            min_attack_set: 50,
        }
    }
}

pub(crate) fn from_grid(
    grid: &QueryGrid,
    ns: &NsDataset,
    opts: &LomiaOptions,
    total: usize,
) -> Result<AttackResult> {
    let mut direct_rows = Vec::new();
    let mut direct_values = Vec::new();
    for (i, (p, &y)) in grid.preds.iter().zip(&grid.labels).enumerate() {
        if let (s, CaseTag::CsmiaCase1) = decide(p, y) {
            direct_rows.push(i);
            direct_values.push(s);
        }
    }
    if direct_rows.len() < opts.min_attack_set {
        return Err(Error::InsufficientData(format!(
            "{} records have a unique label-consistent candidate, {} required",
            direct_rows.len(),
            opts.min_attack_set
        )));
    }
    let mut predictions = vec![0u32; ns.len()];
    let mut cases = vec![CaseTag::LomiaModel; ns.len()];
    for (&i, &s) in direct_rows.iter().zip(&direct_values) {
        predictions[i] = s;
        cases[i] = CaseTag::LomiaDirect;
    }
    if direct_rows.len() < ns.len() {
        let attack_set = ns.select(&direct_rows).with_sensitive(&direct_values)?;
        let model = train_attack_model(&attack_set, &opts.model)?;
        for (i, r) in ns.records().iter().enumerate() {
            if cases[i] == CaseTag::LomiaModel {
                predictions[i] = model.infer(&r.values, Some(r.id))?;
            }
        }
    }
    Ok(AttackResult {
        attack: "lomia".into(),
        record_ids: grid.record_ids.clone(),
        predictions,
        cases,
        coverage: if total == 0 { 0.0 } else { ns.len() as f64 / total as f64 },
        queries: (grid.len() * grid.n_sensitive()) as u64,
    })
}

/// Label-only attack: records with a unique label-consistent candidate are inferred directly
/// and train a model that infers the rest.
pub fn lomia<M: BlackBox + ?Sized>(model: &M, ns: &NsDataset, opts: &LomiaOptions) -> Result<AttackResult> {
    let grid = QueryGrid::collect(model, ns)?;
    from_grid(&grid, ns, opts, ns.len())
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::attacks::targeted::BaseAttack;
use crate::attacks::{csmia, lomia, AttackResult};
use crate::data::{partition_by_attribute, Dataset, Tabular};
use crate::error::{Error, Result};
use crate::models::BlackBox;

/// Confusion-based attack success with the positive sensitive value as the positive class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ASRReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Unweighted mean F1 over all sensitive values.
    pub macro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub n_records: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl ASRReport {
    pub fn from_pairs(pairs: &[(u32, u32)], positive: u32, n_values: usize) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        let mut correct = 0;
        for &(pred, truth) in pairs {
            correct += usize::from(pred == truth);
            match (pred == positive, truth == positive) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let macro_f1 = (0..n_values as u32)
            .map(|v| {
                let tp = pairs.iter().filter(|p| p.0 == v && p.1 == v).count();
                let pp = pairs.iter().filter(|p| p.0 == v).count();
                let ap = pairs.iter().filter(|p| p.1 == v).count();
                f1(ratio(tp, pp), ratio(tp, ap))
            })
            .sum::<f64>()
            / n_values.max(1) as f64;
        ASRReport {
            accuracy: ratio(correct, pairs.len()),
            precision,
            recall,
            f1: f1(precision, recall),
            macro_f1,
            tp,
            fp,
            fn_,
            tn,
            n_records: pairs.len(),
        }
    }
}

fn truth_pairs(result: &AttackResult, truth: &Dataset) -> Result<Vec<(u32, u32)>> {
    let by_id: HashMap<u64, usize> = truth.records().iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    result
        .record_ids
        .iter()
        .zip(&result.predictions)
        .map(|(id, &p)| {
            let i = *by_id.get(id).ok_or(Error::MissingTruth(*id))?;
            Ok((p, truth.sensitive(i)))
        })
        .collect()
}

pub fn attack_success_rate(result: &AttackResult, truth: &Dataset) -> Result<ASRReport> {
    let pairs = truth_pairs(result, truth)?;
    let s = truth.schema();
    Ok(ASRReport::from_pairs(&pairs, s.positive_sensitive(), s.sensitive_values().len()))
}

/// Per-group success over the attacked records, for groups with at least `min_group_size` of them.
pub fn group_asr(
    result: &AttackResult,
    truth: &Dataset,
    group_attr: &str,
    min_group_size: usize,
) -> Result<Vec<(String, ASRReport)>> {
    let attacked: HashMap<u64, usize> = result.record_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let partition = partition_by_attribute(truth, group_attr)?;
    let s = truth.schema();
    let mut out = Vec::new();
    for (group, members) in &partition.groups {
        let pairs: Vec<(u32, u32)> = members
            .rows
            .iter()
            .filter_map(|&r| {
                let id = truth.records()[r].id;
                attacked.get(&id).map(|&k| (result.predictions[k], truth.sensitive(r)))
            })
            .collect();
        if pairs.len() >= min_group_size.max(1) {
            out.push((
                group.clone(),
                ASRReport::from_pairs(&pairs, s.positive_sensitive(), s.sensitive_values().len()),
            ));
        }
    }
    Ok(out)
}

/// Largest minus smallest group accuracy.
pub fn asrd_from_result(result: &AttackResult, truth: &Dataset, group_attr: &str, min_group_size: usize) -> Result<f64> {
    let groups = group_asr(result, truth, group_attr, min_group_size)?;
    if groups.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} groups of `{group_attr}` have at least {min_group_size} attacked records",
            groups.len()
        )));
    }
    let accs = groups.iter().map(|g| g.1.accuracy);
    let max = accs.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = accs.fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Runs `attack` over the whole dataset and reports the spread of group accuracies.
pub fn asrd<M: BlackBox + ?Sized>(
    model: &M,
    ds: &Dataset,
    group_attr: &str,
    attack: &BaseAttack,
    min_group_size: usize,
) -> Result<f64> {
    let ns = ds.without_sensitive();
    let result = match attack {
        BaseAttack::Csmia => csmia(model, &ns)?,
        BaseAttack::Lomia(opts) => lomia(model, &ns, opts)?,
    };
    asrd_from_result(&result, ds, group_attr, min_group_size)
}

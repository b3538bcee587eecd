use serde::{Deserialize, Serialize};

use crate::data::{partition_by_attribute, Dataset, GroupPartition, Tabular};
use crate::error::{Error, Result};
use crate::models::BlackBox;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: String,
    pub n: usize,
    pub positive_rate: f64,
    /// Absent when the group has no positive-label records.
    pub tpr: Option<f64>,
    /// Absent when the group has no negative-label records.
    pub fpr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Largest pairwise gap in true- or false-positive rate.
    pub eod: f64,
    /// Largest pairwise gap in positive-prediction rate.
    pub dpd: f64,
    pub groups: Vec<GroupRates>,
    /// Groups whose TPR or FPR is undefined.
    pub flags: Vec<String>,
}

fn gap(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = values.fold(f64::INFINITY, f64::min);
    if max.is_finite() && min.is_finite() {
        max - min
    } else {
        0.0
    }
}

/// `pred[i]` and `truth[i]` are positive-output indicators for row `i` of the partitioned data.
pub fn fairness_from_predictions(pred: &[bool], truth: &[bool], groups: &GroupPartition) -> Result<FairnessReport> {
    let mut rates = Vec::new();
    let mut flags = Vec::new();
    for (group, members) in groups.non_empty() {
        let rows = &members.rows;
        let pp = rows.iter().filter(|&&r| pred[r]).count();
        let pos: Vec<usize> = rows.iter().copied().filter(|&r| truth[r]).collect();
        let neg: Vec<usize> = rows.iter().copied().filter(|&r| !truth[r]).collect();
        let rate = |set: &[usize]| {
            (!set.is_empty()).then(|| set.iter().filter(|&&r| pred[r]).count() as f64 / set.len() as f64)
        };
        let (tpr, fpr) = (rate(&pos), rate(&neg));
        if tpr.is_none() || fpr.is_none() {
            flags.push(format!("group `{group}` lacks a label class; its undefined rate is excluded"));
        }
        rates.push(GroupRates {
            group: group.clone(),
            n: rows.len(),
            positive_rate: pp as f64 / rows.len() as f64,
            tpr,
            fpr,
        });
    }
    if rates.len() < 2 {
        return Err(Error::Degenerate(format!(
            "fairness gaps need two non-empty groups of `{}`",
            groups.group_attr
        )));
    }
    let dpd = gap(rates.iter().map(|r| r.positive_rate));
    let eod = gap(rates.iter().filter_map(|r| r.tpr)).max(gap(rates.iter().filter_map(|r| r.fpr)));
    Ok(FairnessReport { eod, dpd, groups: rates, flags })
}

/// Equalized-odds and demographic-parity gaps of `model` on `ds` across `group_attr`.
pub fn fairness_metrics<M: BlackBox + ?Sized>(model: &M, ds: &Dataset, group_attr: &str) -> Result<FairnessReport> {
    let schema = ds.schema();
    if schema.output_values().len() != 2 {
        return Err(Error::Unsupported("fairness gaps need a binary output".into()));
    }
    let positive = schema.positive_output();
    let groups = partition_by_attribute(ds, group_attr)?;
    let mut pred = Vec::with_capacity(ds.len());
    for r in ds.records() {
        pred.push(model.query(&r.values, Some(r.id))?.label == positive);
    }
    let truth: Vec<bool> = (0..ds.len()).map(|i| ds.label(i) == positive).collect();
    fairness_from_predictions(&pred, &truth, &groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition::GroupMembers;
    use std::collections::BTreeMap;

    fn partition(sizes: &[(&str, std::ops::Range<usize>)]) -> GroupPartition {
        let mut groups = BTreeMap::new();
        for (g, r) in sizes {
            groups.insert(
                g.to_string(),
                GroupMembers {
                    record_ids: r.clone().map(|i| i as u64).collect(),
                    rows: r.clone().collect(),
                },
            );
        }
        GroupPartition {
            group_attr: "g".into(),
            groups,
        }
    }

    #[test]
    fn identical_behaviour_has_no_gap() {
        let truth = [true, false, true, false];
        let pred = [true, false, true, false];
        let r = fairness_from_predictions(&pred, &truth, &partition(&[("a", 0..2), ("b", 2..4)])).unwrap();
        assert_eq!((r.eod, r.dpd), (0.0, 0.0));
    }

    #[test]
    fn always_positive_against_always_negative() {
        let truth = [true, false, true, false];
        let pred = [true, true, false, false];
        let r = fairness_from_predictions(&pred, &truth, &partition(&[("a", 0..2), ("b", 2..4)])).unwrap();
        assert_eq!(r.dpd, 1.0);
    }

    #[test]
    fn hand_built_rates() {
        // A: TPR 9/10, FPR 2/10. B: TPR 7/10, FPR 3/10.
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (tp, fp) in [(9, 2), (7, 3)] {
            for k in 0..10 {
                truth.push(true);
                pred.push(k < tp);
            }
            for k in 0..10 {
                truth.push(false);
                pred.push(k < fp);
            }
        }
        let p = partition(&[("a", 0..20), ("b", 20..40)]);
        let r = fairness_from_predictions(&pred, &truth, &p).unwrap();
        assert!((r.eod - 0.2).abs() < 1e-12);
        // Same result with the groups named the other way round.
        let q = partition(&[("b", 0..20), ("a", 20..40)]);
        let s = fairness_from_predictions(&pred, &truth, &q).unwrap();
        assert_eq!((r.eod, r.dpd), (s.eod, s.dpd));
    }

    #[test]
    fn one_class_group_is_flagged() {
        let truth = [true, true, true, false];
        let pred = [true, false, true, false];
        let r = fairness_from_predictions(&pred, &truth, &partition(&[("a", 0..2), ("b", 2..4)])).unwrap();
        assert_eq!(r.flags.len(), 1);
        assert!((r.eod - 0.5).abs() < 1e-15);
    }
}

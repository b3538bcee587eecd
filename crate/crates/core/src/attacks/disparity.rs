use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::angular::{angular_difference, DEFAULT_MIN_POINTS};
use super::confidence::{ConfidenceMatrix, QueryGrid};
use super::csmia;
use crate::data::{partition_by_attribute, Dataset, GroupPartition, NsDataset};
use crate::error::Result;
use crate::models::BlackBox;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingOptions {
    /// Correct records needed per output label to fit a line.
    pub min_points: usize,
    /// Records needed for a group to be ranked.
    pub min_group_size: usize,
    /// Familywise level of the pairwise test deciding whether any disparity was found.
    pub alpha: f64,
    /// Spread of scores below which a ranking without standard errors is low-confidence.
    pub min_spread: f64,
}

impl Default for RankingOptions {
    fn default() -> Self {
        RankingOptions {
            min_points: DEFAULT_MIN_POINTS,
            min_group_size: 30,
            alpha: 0.05,
            min_spread: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub group: String,
    pub score: f64,
    pub std_error: Option<f64>,
    pub n_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unranked {
    pub group: String,
    pub reason: String,
}

/// Groups in decreasing score order; equal scores keep lexicographic group order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub group_attr: String,
    pub entries: Vec<RankEntry>,
    pub unranked: Vec<Unranked>,
    /// No pair of groups differs detectably.
    pub low_confidence: bool,
}

impl Ranking {
    pub fn new(group_attr: &str, mut entries: Vec<RankEntry>, unranked: Vec<Unranked>, opts: &RankingOptions) -> Self {
        entries.sort_by(|a, b| a.group.cmp(&b.group));
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        let low_confidence = low_confidence(&entries, opts);
        Ranking {
            group_attr: group_attr.to_string(),
            entries,
            unranked,
            low_confidence,
        }
    }

    pub fn groups(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.group.as_str()).collect()
    }

    pub fn score(&self, group: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.group == group).map(|e| e.score)
    }

    pub fn spread(&self) -> f64 {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => a.score - b.score,
            _ => 0.0,
        }
    }
}

fn low_confidence(entries: &[RankEntry], opts: &RankingOptions) -> bool {
    if entries.len() < 2 {
        return true;
    }
    let ses: Option<Vec<f64>> = entries.iter().map(|e| e.std_error).collect();
    let Some(ses) = ses else {
        return entries[0].score - entries[entries.len() - 1].score < opts.min_spread;
    };
    let k = entries.len();
    let pairs = (k * (k - 1) / 2) as f64;
    let z = Normal::standard().inverse_cdf(1.0 - opts.alpha / (2.0 * pairs));
    for i in 0..k {
        for j in i + 1..k {
            let se = (ses[i] * ses[i] + ses[j] * ses[j]).sqrt();
            if (entries[i].score - entries[j].score).abs() > z * se {
                return false;
            }
        }
    }
    true
}

/// Angular difference of every sufficiently large group of `partition`, with the rest reported.
pub(crate) fn group_scores(
    cm: &ConfidenceMatrix,
    partition: &GroupPartition,
    opts: &RankingOptions,
) -> (Vec<RankEntry>, Vec<Unranked>) {
    let mut entries = Vec::new();
    let mut unranked = Vec::new();
    for (group, members) in &partition.groups {
        if members.rows.len() < opts.min_group_size.max(1) {
            unranked.push(Unranked {
                group: group.clone(),
                reason: format!("{} records, {} required", members.rows.len(), opts.min_group_size),
            });
            continue;
        }
        match angular_difference(cm, &members.rows, opts.min_points) {
            Ok(d) => entries.push(RankEntry {
                group: group.clone(),
                score: d.delta,
                std_error: d.std_error,
                n_records: members.rows.len(),
            }),
            Err(e) => unranked.push(Unranked {
                group: group.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (entries, unranked)
}

/// Ranks the groups of `group_attr` by angular difference from one confidence-matrix pass.
pub fn disparity_inference<M: BlackBox + ?Sized>(
    model: &M,
    ns: &NsDataset,
    group_attr: &str,
    opts: &RankingOptions,
) -> Result<Ranking> {
    let partition = partition_by_attribute(ns, group_attr)?;
    let grid = QueryGrid::collect(model, ns)?;
    let cm = ConfidenceMatrix::from_grid(&grid, ns);
    let (entries, unranked) = group_scores(&cm, &partition, opts);
    let ranking = Ranking::new(group_attr, entries, unranked, opts);
    if !ranking.unranked.is_empty() {
        log::warn!("{} groups of `{group_attr}` could not be ranked", ranking.unranked.len());
    }
    Ok(ranking)
}

/// Ranks groups by CSMIA accuracy on auxiliary records whose sensitive values are known.
pub fn baseline_ranking_via_aux<M: BlackBox + ?Sized>(
    model: &M,
    aux: &Dataset,
    group_attr: &str,
    opts: &RankingOptions,
) -> Result<Ranking> {
    let partition = partition_by_attribute(aux, group_attr)?;
    let result = csmia::csmia(model, &aux.without_sensitive())?;
    let mut entries = Vec::new();
    let mut unranked = Vec::new();
    for (group, members) in &partition.groups {
        if members.rows.is_empty() {
            unranked.push(Unranked {
                group: group.clone(),
                reason: "no auxiliary records".into(),
            });
            continue;
        }
        let hits = members
            .rows
            .iter()
            .filter(|&&i| result.predictions[i] == aux.sensitive(i))
            .count();
        entries.push(RankEntry {
            group: group.clone(),
            score: hits as f64 / members.rows.len() as f64,
            std_error: None,
            n_records: members.rows.len(),
        });
    }
    let base_opts = RankingOptions {
        min_spread: 0.0,
        ..opts.clone()
    };
    Ok(Ranking::new(group_attr, entries, unranked, &base_opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(g: &str, score: f64, se: Option<f64>) -> RankEntry {
        RankEntry {
            group: g.into(),
            score,
            std_error: se,
            n_records: 100,
        }
    }

    #[test]
    fn orders_descending_with_lexicographic_ties() {
        let r = Ranking::new(
            "g",
            vec![entry("b", 0.1, None), entry("c", 0.3, None), entry("a", 0.1, None)],
            vec![],
            &RankingOptions::default(),
        );
        assert_eq!(r.groups(), vec!["c", "a", "b"]);
        assert!(!r.low_confidence);
    }

    #[test]
    fn overlapping_errors_are_low_confidence() {
        let opts = RankingOptions::default();
        let r = Ranking::new("g", vec![entry("a", 0.10, Some(0.05)), entry("b", 0.12, Some(0.05))], vec![], &opts);
        assert!(r.low_confidence);
        let r = Ranking::new("g", vec![entry("a", 0.10, Some(0.01)), entry("b", 0.30, Some(0.01))], vec![], &opts);
        assert!(!r.low_confidence);
        let single = Ranking::new("g", vec![entry("a", 0.1, None)], vec![], &opts);
        assert!(single.low_confidence);
    }
}

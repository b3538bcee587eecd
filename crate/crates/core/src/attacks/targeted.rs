//! Budgeted attacks on the most vulnerable records.
//!
//! Candidate attributes are scored on a query-budget sample by the range of their groups'
//! angular differences. The single-attribute attack accumulates the best attribute's groups in
//! decreasing score order until the subset size is within `epsilon` of `kappa * |D|`. The nested
//! attack intersects the above-average-risk segments (top groups covering about half of the
//! records) of the best `d - 1` attributes and then adds groups of the `d`-th attribute.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::confidence::{ConfidenceMatrix, QueryGrid};
use super::disparity::{group_scores, Ranking, RankingOptions};
use super::imputation::predict_all;
use super::lomia::LomiaOptions;
use super::result::AttackResult;
use super::{csmia, lomia};
use crate::data::{partition_by_attribute, Dataset, NsDataset, Tabular};
use crate::error::{Error, Result};
use crate::models::{train_attack_model, BlackBox, ModelConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetedAttackConfig {
    /// Target subset size as a fraction of the dataset. 1 attacks everything.
    pub kappa: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Fraction of records queried to score attributes.
    #[serde(default = "default_query_budget")]
    pub query_budget: f64,
    /// Nested depth; `ceil(log2(1 / kappa))` when absent.
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Attributes considered for grouping; every categorical non-sensitive, non-output attribute
    /// when absent.
    #[serde(default)]
    pub candidate_attrs: Option<Vec<String>>,
    #[serde(default)]
    pub ranking: RankingOptions,
}

fn default_epsilon() -> f64 {
    0.02
}

fn default_query_budget() -> f64 {
    1.0
}

impl TargetedAttackConfig {
    pub fn new(kappa: f64) -> Self {
        TargetedAttackConfig {
            kappa,
            epsilon: default_epsilon(),
            query_budget: default_query_budget(),
            depth: None,
            seed: 0,
            candidate_attrs: None,
            ranking: RankingOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::Config(format!("kappa {} outside (0, 1]", self.kappa)));
        }
        if !(self.query_budget > 0.0 && self.query_budget <= 1.0) {
            return Err(Error::Config(format!("query budget {} outside (0, 1]", self.query_budget)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_depth(&self) -> usize {
        self.depth
            .unwrap_or_else(|| ((1.0 / self.kappa).log2() - 1e-9).ceil().max(0.0) as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseAttack {
    Csmia,
    Lomia(LomiaOptions),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationMode {
    Ideal,
    Practical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateTerm {
    pub attr: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeScores {
    pub attr: String,
    pub range: f64,
    pub ranking: Ranking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSubset {
    /// Conjunction of terms; a record matches a term when its value is listed.
    pub predicate: Vec<PredicateTerm>,
    pub record_ids: Vec<u64>,
    pub kappa: f64,
    pub achieved_fraction: f64,
    /// `|achieved_fraction - kappa| < epsilon`. False means the nearest achievable size was used.
    pub budget_satisfied: bool,
    /// Scored attributes, best first.
    pub attribute_scores: Vec<AttributeScores>,
}

impl TargetSubset {
    pub fn describe_predicate(&self) -> String {
        if self.predicate.is_empty() {
            return "(all records)".into();
        }
        self.predicate
            .iter()
            .map(|t| format!("{} in {{{}}}", t.attr, t.values.join(", ")))
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

fn candidate_attrs<T: Tabular + ?Sized>(ds: &T, cfg: &TargetedAttackConfig) -> Result<Vec<String>> {
    let schema = ds.schema();
    match &cfg.candidate_attrs {
        Some(list) => {
            for a in list {
                schema.index_of(a)?;
            }
            Ok(list.clone())
        }
        None => Ok(schema
            .group_candidates()
            .into_iter()
            .map(|i| schema.attribute(i).name.clone())
            .collect()),
    }
}

/// Sorts by decreasing range, keeping candidate order on ties, and drops attributes with fewer
/// than two ranked groups.
fn finish_scores(mut scores: Vec<AttributeScores>) -> Result<Vec<AttributeScores>> {
    scores.retain(|s| s.ranking.entries.len() >= 2);
    if scores.is_empty() {
        return Err(Error::NoDisparity);
    }
    scores.sort_by(|a, b| b.range.total_cmp(&a.range));
    Ok(scores)
}

fn score_by_angular_difference<M: BlackBox + ?Sized>(
    model: &M,
    ns: &NsDataset,
    cfg: &TargetedAttackConfig,
) -> Result<(Vec<AttributeScores>, u64)> {
    let sample = if cfg.query_budget < 1.0 {
        let k = ((cfg.query_budget * ns.len() as f64).round() as usize).clamp(1, ns.len());
        let all: Vec<usize> = (0..ns.len()).collect();
        let mut rows: Vec<usize> = all
            .choose_multiple(&mut rng::stream(cfg.seed, "query-sample"), k)
            .copied()
            .collect();
        rows.sort_unstable();
        ns.select(&rows)
    } else {
        ns.clone()
    };
    let grid = QueryGrid::collect(model, &sample)?;
    let queries = (grid.len() * grid.n_sensitive()) as u64;
    let cm = ConfidenceMatrix::from_grid(&grid, &sample);
    let mut scores = Vec::new();
    for attr in candidate_attrs(ns, cfg)? {
        let partition = partition_by_attribute(&sample, &attr)?;
        let (entries, unranked) = group_scores(&cm, &partition, &cfg.ranking);
        let ranking = Ranking::new(&attr, entries, unranked, &cfg.ranking);
        scores.push(AttributeScores {
            attr,
            range: ranking.spread(),
            ranking,
        });
    }
    Ok((finish_scores(scores)?, queries))
}

/// Rows of `ns` whose `attr` value is among the first `m` ranked groups.
fn top_rows(ns: &NsDataset, s: &AttributeScores, m: usize) -> Result<(Vec<bool>, Vec<String>)> {
    let partition = partition_by_attribute(ns, &s.attr)?;
    let mut mask = vec![false; ns.len()];
    let values: Vec<String> = s.ranking.entries[..m].iter().map(|e| e.group.clone()).collect();
    for v in &values {
        for &r in partition.rows(v) {
            mask[r] = true;
        }
    }
    Ok((mask, values))
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

fn and(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

/// Smallest `m` whose restricted union is within `epsilon` of `kappa`, else the nearest size.
fn select_groups(
    ns: &NsDataset,
    s: &AttributeScores,
    base: &[bool],
    kappa: f64,
    epsilon: f64,
) -> Result<(Vec<bool>, Vec<String>, bool)> {
    let total = ns.len() as f64;
    let mut nearest: Option<(f64, Vec<bool>, Vec<String>)> = None;
    for m in 1..=s.ranking.entries.len() {
        let (mask, values) = top_rows(ns, s, m)?;
        let mask = and(&mask, base);
        let gap = (count(&mask) as f64 / total - kappa).abs();
        if gap < epsilon {
            return Ok((mask, values, true));
        }
        if nearest.as_ref().is_none_or(|n| gap < n.0) {
            nearest = Some((gap, mask, values));
        }
    }
    let (gap, mask, values) = nearest.expect("at least two ranked groups");
    log::warn!(
        "no group prefix of `{}` meets the budget; nearest is {:.4} away",
        s.attr,
        gap
    );
    Ok((mask, values, false))
}

/// Top groups whose union covers closest to half of the records.
fn above_average_segment(ns: &NsDataset, s: &AttributeScores) -> Result<(Vec<bool>, Vec<String>)> {
    let total = ns.len() as f64;
    let mut best: Option<(f64, Vec<bool>, Vec<String>)> = None;
    for m in 1..=s.ranking.entries.len() {
        let (mask, values) = top_rows(ns, s, m)?;
        let gap = (count(&mask) as f64 / total - 0.5).abs();
        if best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, mask, values));
        }
    }
    let (_, mask, values) = best.expect("ranked groups");
    Ok((mask, values))
}

fn run_base<M: BlackBox + ?Sized>(
    model: &M,
    subset: &NsDataset,
    base: &BaseAttack,
    total: usize,
) -> Result<AttackResult> {
    let grid = QueryGrid::collect(model, subset)?;
    match base {
        BaseAttack::Csmia => Ok(csmia::from_grid(&grid, total)),
        BaseAttack::Lomia(opts) => lomia::from_grid(&grid, subset, opts, total),
    }
}

fn mask_rows(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

fn whole(ns: &NsDataset, kappa: f64) -> TargetSubset {
    TargetSubset {
        predicate: Vec::new(),
        record_ids: ns.ids(),
        kappa,
        achieved_fraction: 1.0,
        budget_satisfied: (1.0 - kappa).abs() < default_epsilon(),
        attribute_scores: Vec::new(),
    }
}

fn finish<M: BlackBox + ?Sized>(
    model: &M,
    ns: &NsDataset,
    mask: &[bool],
    mut subset: TargetSubset,
    base: &BaseAttack,
    scoring_queries: u64,
) -> Result<(TargetSubset, AttackResult)> {
    let rows = mask_rows(mask);
    if rows.is_empty() {
        return Err(Error::EmptyTarget(subset.describe_predicate()));
    }
    let sub = ns.select(&rows);
    subset.record_ids = sub.ids();
    subset.achieved_fraction = rows.len() as f64 / ns.len() as f64;
    let mut result = run_base(model, &sub, base, ns.len())?;
    result.queries += scoring_queries;
    Ok((subset, result))
}

/// Attacks the groups of the single attribute with the widest spread of angular differences.
pub fn targeted_single<M: BlackBox + ?Sized>(
    model: &M,
    ns: &NsDataset,
    cfg: &TargetedAttackConfig,
    base: &BaseAttack,
) -> Result<(TargetSubset, AttackResult)> {
    cfg.validate()?;
    if cfg.kappa >= 1.0 {
        let mask = vec![true; ns.len()];
        return finish(model, ns, &mask, whole(ns, cfg.kappa), base, 0);
    }
    let (scores, queries) = score_by_angular_difference(model, ns, cfg)?;
    let everyone = vec![true; ns.len()];
    let (mask, values, ok) = select_groups(ns, &scores[0], &everyone, cfg.kappa, cfg.epsilon)?;
    let subset = TargetSubset {
        predicate: vec![PredicateTerm {
            attr: scores[0].attr.clone(),
            values,
        }],
        record_ids: Vec::new(),
        kappa: cfg.kappa,
        achieved_fraction: 0.0,
        budget_satisfied: ok,
        attribute_scores: scores,
    };
    finish(model, ns, &mask, subset, base, queries)
}

/// Attacks the intersection of above-average-risk segments of the `d` best attributes.
pub fn targeted_nested<M: BlackBox + ?Sized>(
    model: &M,
    ns: &NsDataset,
    cfg: &TargetedAttackConfig,
    base: &BaseAttack,
) -> Result<(TargetSubset, AttackResult)> {
    cfg.validate()?;
    let d = cfg.effective_depth();
    if d == 0 || cfg.kappa >= 1.0 {
        let mask = vec![true; ns.len()];
        return finish(model, ns, &mask, whole(ns, cfg.kappa), base, 0);
    }
    let (scores, queries) = score_by_angular_difference(model, ns, cfg)?;
    if scores.len() < d {
        return Err(Error::InsufficientData(format!(
            "depth {d} needs {d} rankable attributes, found {}",
            scores.len()
        )));
    }
    let mut base_mask = vec![true; ns.len()];
    let mut predicate = Vec::with_capacity(d);
    for s in &scores[..d - 1] {
        let (mask, values) = above_average_segment(ns, s)?;
        base_mask = and(&base_mask, &mask);
        predicate.push(PredicateTerm {
            attr: s.attr.clone(),
            values,
        });
    }
    if count(&base_mask) == 0 {
        let subset = TargetSubset {
            predicate,
            record_ids: Vec::new(),
            kappa: cfg.kappa,
            achieved_fraction: 0.0,
            budget_satisfied: false,
            attribute_scores: scores,
        };
        return Err(Error::EmptyTarget(subset.describe_predicate()));
    }
    let (mask, values, ok) = select_groups(ns, &scores[d - 1], &base_mask, cfg.kappa, cfg.epsilon)?;
    predicate.push(PredicateTerm {
        attr: scores[d - 1].attr.clone(),
        values,
    });
    let subset = TargetSubset {
        predicate,
        record_ids: Vec::new(),
        kappa: cfg.kappa,
        achieved_fraction: 0.0,
        budget_satisfied: ok,
        attribute_scores: scores,
    };
    finish(model, ns, &mask, subset, base, queries)
}

/// Single-attribute targeting driven by imputation accuracy on `aux` instead of angular
/// difference; the same imputation model then attacks the selected target records.
pub fn targeted_imputation_baseline(
    aux: &Dataset,
    target: &NsDataset,
    cfg: &TargetedAttackConfig,
    model_config: &ModelConfig,
    mode: ImputationMode,
) -> Result<(TargetSubset, AttackResult)> {
    cfg.validate()?;
    let model = train_attack_model(aux, model_config)?;
    let label = match mode {
        ImputationMode::Ideal => "imputation-ideal",
        ImputationMode::Practical => "imputation-practical",
    };
    if cfg.kappa >= 1.0 {
        let mut r = predict_all(&model, target, target.len())?;
        r.attack = label.into();
        return Ok((whole(target, cfg.kappa), r));
    }
    let in_sample = predict_all(&model, &aux.without_sensitive(), aux.len())?;
    let mut scores = Vec::new();
    for attr in candidate_attrs(target, cfg)? {
        let partition = partition_by_attribute(aux, &attr)?;
        let mut entries = Vec::new();
        let mut unranked = Vec::new();
        for (group, members) in &partition.groups {
            if members.rows.len() < cfg.ranking.min_group_size.max(1) {
                unranked.push(super::disparity::Unranked {
                    group: group.clone(),
                    reason: format!("{} auxiliary records", members.rows.len()),
                });
                continue;
            }
            let hits = members
                .rows
                .iter()
                .filter(|&&i| in_sample.predictions[i] == aux.sensitive(i))
                .count();
            entries.push(super::disparity::RankEntry {
                group: group.clone(),
                score: hits as f64 / members.rows.len() as f64,
                std_error: None,
                n_records: members.rows.len(),
            });
        }
        let opts = RankingOptions {
            min_spread: 0.0,
            ..cfg.ranking.clone()
        };
        let ranking = Ranking::new(&attr, entries, unranked, &opts);
        scores.push(AttributeScores {
            attr,
            range: ranking.spread(),
            ranking,
        });
    }
    let scores = finish_scores(scores)?;
    let everyone = vec![true; target.len()];
    let (mask, values, ok) = select_groups(target, &scores[0], &everyone, cfg.kappa, cfg.epsilon)?;
    let rows = mask_rows(&mask);
    let predicate = vec![PredicateTerm {
        attr: scores[0].attr.clone(),
        values,
    }];
    if rows.is_empty() {
        return Err(Error::EmptyTarget(format!("{} in {:?}", predicate[0].attr, predicate[0].values)));
    }
    let sub = target.select(&rows);
    let mut result = predict_all(&model, &sub, target.len())?;
    result.attack = label.into();
    let subset = TargetSubset {
        predicate,
        record_ids: sub.ids(),
        kappa: cfg.kappa,
        achieved_fraction: rows.len() as f64 / target.len() as f64,
        budget_satisfied: ok,
        attribute_scores: scores,
    };
    Ok((subset, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_depth_follows_inverse_budget() {
        let d = |k: f64| TargetedAttackConfig::new(k).effective_depth();
        assert_eq!(d(1.0), 0);
        assert_eq!(d(0.5), 1);
        assert_eq!(d(0.375), 2);
        assert_eq!(d(0.25), 2);
        assert_eq!(d(0.1), 4);
        assert_eq!(d(0.05), 5);
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(TargetedAttackConfig::new(0.0).validate().is_err());
        assert!(TargetedAttackConfig::new(1.5).validate().is_err());
        let mut c = TargetedAttackConfig::new(0.2);
        c.query_budget = 0.0;
        assert!(c.validate().is_err());
    }
}

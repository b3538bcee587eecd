use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{largest_feasible_n, partition_by_attribute, sample_with_correlation, CellCounts, Dataset, Tabular};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BCorrGroup {
    pub group: String,
    pub n_before: usize,
    pub n_after: usize,
    /// Native negative-to-positive sensitive ratio, kept during resampling.
    pub m: f64,
    pub c_before: f64,
    pub c_target: f64,
    pub c_after: f64,
    pub resampled: bool,
    pub kept: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BCorrPlan {
    pub group_attr: String,
    /// Group with the smallest |c|, kept whole.
    pub anchor_group: String,
    pub anchor_correlation: f64,
    pub groups: Vec<BCorrGroup>,
    pub retained_fraction: f64,
    pub flags: Vec<String>,
}

impl BCorrPlan {
    pub fn group(&self, name: &str) -> Option<&BCorrGroup> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// Subsamples every group of `group_attr` to the correlation magnitude of the least correlated
/// group, keeping each group's sign and sensitive ratio.
pub fn bcorr(ds: &Dataset, group_attr: &str, seed: u64) -> Result<(Dataset, BCorrPlan)> {
    let partition = partition_by_attribute(ds, group_attr)?;
    let mut stats = Vec::new();
    for (group, members) in partition.non_empty() {
        let sub = ds.select(&members.rows);
        let counts = CellCounts::of(&sub, None);
        let c = counts.pearson().map_err(|e| Error::Degenerate(format!("group `{group}`: {e}")))?;
        let pos = counts.n_pp + counts.n_pn;
        let m = (counts.n_np + counts.n_nn) as f64 / pos as f64;
        stats.push((group.clone(), sub, c, m));
    }
    if stats.len() < 2 {
        return Err(Error::Degenerate(format!(
            "balancing needs at least two non-empty groups of `{group_attr}`"
        )));
    }
    let anchor = stats
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .2.abs().total_cmp(&b.1 .2.abs()).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty");
    let c_m = stats[anchor].2.abs();
    let mut flags = Vec::new();
    let has_pos = stats.iter().any(|s| s.2 > 0.0);
    let has_neg = stats.iter().any(|s| s.2 < 0.0);
    if has_pos && has_neg {
        flags.push("groups mix correlation signs; magnitudes are equalized with each sign kept".to_string());
    }

    let mut groups = Vec::new();
    let mut kept_ids = HashSet::new();
    for (i, (group, sub, c, m)) in stats.iter().enumerate() {
        let n = sub.len();
        let target = c.signum() * c_m;
        let keep_whole = i == anchor || (c - target).abs() <= 2.0 / n as f64;
        let out = if keep_whole {
            sub.clone()
        } else {
            let size = largest_feasible_n(sub, *m, target).ok_or_else(|| Error::Infeasible {
                cell: format!("group `{group}`"),
                value: target,
            })?;
            if size < n / 2 {
                flags.push(format!("group `{group}` shrinks from {n} to {size} records"));
            }
            sample_with_correlation(sub, size, *m, target, derive_seed(seed, &format!("bcorr/{group}")))?
        };
        let c_after = CellCounts::of(&out, None).pearson()?;
        let kept = out.ids();
        kept_ids.extend(kept.iter().copied());
        groups.push(BCorrGroup {
            group: group.clone(),
            n_before: n,
            n_after: out.len(),
            m: *m,
            c_before: *c,
            c_target: target,
            c_after,
            resampled: !keep_whole,
            kept,
        });
    }
    let total_before: usize = groups.iter().map(|g| g.n_before).sum();
    let balanced = ds.filter(|r| kept_ids.contains(&r.id));
    let plan = BCorrPlan {
        group_attr: group_attr.to_string(),
        anchor_group: stats[anchor].0.clone(),
        anchor_correlation: stats[anchor].2,
        retained_fraction: balanced.len() as f64 / total_before as f64,
        groups,
        flags,
    };
    Ok((balanced, plan))
}

//! Synthetic disparate datasets.
//!
//! Features are drawn conditionally on the output label: numeric features are unit-variance
//! Gaussians with means `±δ/2`, categorical features are multinomials whose logits tilt linearly
//! with the level index in the label's direction. `δ = class_separation / sqrt(#features)`, so the
//! class means sit `class_separation` apart in Mahalanobis distance over the numeric block. The
//! sensitive value is assigned independently of the features given the label, which lets the
//! sampler fix each group's sensitive/output correlation exactly.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::correlation::cell_counts_for_correlation;
use super::dataset::{Dataset, Record, Tabular, Value};
use super::sampler::sample_with_correlation;
use super::schema::{Attribute, AttributeSchema};
use crate::error::{Error, Result};
use crate::rng;

pub const GROUP_ATTR: &str = "group";
pub const SENSITIVE_ATTR: &str = "sensitive";
pub const OUTPUT_ATTR: &str = "label";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group: String,
    pub n: usize,
    /// Negative-to-positive sensitive ratio.
    #[serde(default = "one")]
    pub m: f64,
    pub c: f64,
    /// One value per entry of [`SyntheticSpec::facets`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facets: Vec<String>,
}

fn one() -> f64 {
    1.0
}

/// Extra categorical attribute whose value is fixed per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_features_numeric: usize,
    #[serde(default)]
    pub n_features_categorical: usize,
    #[serde(default = "default_levels")]
    pub categorical_levels: usize,
    pub group_attr_cardinality: usize,
    pub per_group: Vec<GroupSpec>,
    pub class_separation: f64,
    pub seed: u64,
    #[serde(default)]
    pub facets: Vec<Facet>,
    /// Pool size per cell as a multiple of the requested cell count.
    #[serde(default = "default_pool_factor")]
    pub pool_factor: usize,
}

fn default_levels() -> usize {
    3
}

fn default_pool_factor() -> usize {
    4
}

impl SyntheticSpec {
    /// Groups `g0..g{k-1}` with the given correlations, `n` records each and `m = 1`.
    pub fn with_correlations(cs: &[f64], n: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_features_numeric: 4,
            n_features_categorical: 2,
            categorical_levels: 3,
            group_attr_cardinality: cs.len(),
            per_group: cs
                .iter()
                .enumerate()
                .map(|(i, &c)| GroupSpec {
                    group: format!("g{i}"),
                    n,
                    m: 1.0,
                    c,
                    facets: Vec::new(),
                })
                .collect(),
            class_separation: 1.5,
            seed,
            facets: Vec::new(),
            pool_factor: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_features_numeric + self.n_features_categorical == 0 {
            return bad("at least one non-sensitive feature is required".into());
        }
        if self.n_features_categorical > 0 && self.categorical_levels < 2 {
            return bad("categorical features need at least 2 levels".into());
        }
        if self.per_group.is_empty() {
            return bad("no groups".into());
        }
        if self.per_group.len() != self.group_attr_cardinality {
            return bad(format!(
                "group_attr_cardinality is {} but {} groups are listed",
                self.group_attr_cardinality,
                self.per_group.len()
            ));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad("class_separation must be a non-negative number".into());
        }
        if self.pool_factor < 1 {
            return bad("pool_factor must be at least 1".into());
        }
        let mut names = HashSet::new();
        for g in &self.per_group {
            if !names.insert(g.group.as_str()) {
                return bad(format!("group `{}` listed twice", g.group));
            }
            cell_counts_for_correlation(g.n, g.m, g.c)?;
            if g.facets.len() != self.facets.len() {
                return bad(format!(
                    "group `{}` gives {} facet values for {} facets",
                    g.group,
                    g.facets.len(),
                    self.facets.len()
                ));
            }
            for (v, f) in g.facets.iter().zip(&self.facets) {
                if !f.values.contains(v) {
                    return bad(format!("`{v}` is not a value of facet `{}`", f.name));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<AttributeSchema> {
        let mut attrs = Vec::new();
        for j in 0..self.n_features_numeric {
            attrs.push(Attribute::numeric(&format!("x{j}")));
        }
        let levels: Vec<String> = (0..self.categorical_levels).map(|l| format!("l{l}")).collect();
        let level_refs: Vec<&str> = levels.iter().map(String::as_str).collect();
        for j in 0..self.n_features_categorical {
            attrs.push(Attribute::categorical(&format!("k{j}"), &level_refs));
        }
        let groups: Vec<&str> = self.per_group.iter().map(|g| g.group.as_str()).collect();
        attrs.push(Attribute::categorical(GROUP_ATTR, &groups));
        for f in &self.facets {
            let vals: Vec<&str> = f.values.iter().map(String::as_str).collect();
            attrs.push(Attribute::categorical(&f.name, &vals));
        }
        attrs.push(Attribute::categorical(SENSITIVE_ATTR, &["no", "yes"]));
        attrs.push(Attribute::categorical(OUTPUT_ATTR, &["false", "true"]));
        AttributeSchema::new(attrs, SENSITIVE_ATTR, OUTPUT_ATTR, "yes", "true")
    }

    fn feature_shift(&self) -> f64 {
        self.class_separation / ((self.n_features_numeric + self.n_features_categorical) as f64).sqrt()
    }
}

/// Generates `count` records of one (group, sensitive, label) cell.
#[allow(clippy::too_many_arguments)]
fn push_cell(
    spec: &SyntheticSpec,
    rng: &mut rng::Rng,
    fixed: &[Value],
    s: u32,
    y: u32,
    count: usize,
    next_id: &mut u64,
    out: &mut Vec<Record>,
) {
    let delta = spec.feature_shift();
    let sign = if y == 1 { 1.0 } else { -1.0 };
    let k = spec.categorical_levels;
    let probs: Vec<f64> = {
        let w: Vec<f64> = (0..k)
            .map(|l| (sign * delta * (l as f64 - (k as f64 - 1.0) / 2.0)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|v| v / z).collect()
    };
    for _ in 0..count {
        let mut values = Vec::with_capacity(spec.n_features_numeric + spec.n_features_categorical + fixed.len() + 2);
        for _ in 0..spec.n_features_numeric {
            let z: f64 = StandardNormal.sample(rng);
            values.push(Value::Num(z + sign * delta / 2.0));
        }
        for _ in 0..spec.n_features_categorical {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut level = k - 1;
            for (l, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    level = l;
                    break;
                }
            }
            values.push(Value::Cat(level as u32));
        }
        values.extend_from_slice(fixed);
        values.push(Value::Cat(s));
        values.push(Value::Cat(y));
        out.push(Record { id: *next_id, values });
        *next_id += 1;
    }
}

fn group_fixed_values(spec: &SyntheticSpec, gi: usize) -> Vec<Value> {
    let g = &spec.per_group[gi];
    let mut fixed = vec![Value::Cat(gi as u32)];
    for (v, f) in g.facets.iter().zip(&spec.facets) {
        let code = f.values.iter().position(|x| x == v).expect("validated facet");
        fixed.push(Value::Cat(code as u32));
    }
    fixed
}

/// Oversized pool holding `pool_factor` times each group's requested cell counts.
pub fn generate_synthetic_pool(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let schema = Arc::new(spec.schema()?);
    let mut records = Vec::new();
    let mut next_id = 0u64;
    for (gi, g) in spec.per_group.iter().enumerate() {
        let want = cell_counts_for_correlation(g.n, g.m, g.c)?;
        let fixed = group_fixed_values(spec, gi);
        let mut rng = rng::stream(spec.seed, &format!("pool/{}", g.group));
        for ((s, y), count) in want.cells() {
            push_cell(
                spec,
                &mut rng,
                &fixed,
                u32::from(s),
                u32::from(y),
                count * spec.pool_factor,
                &mut next_id,
                &mut records,
            );
        }
    }
    Ok(Dataset::new_unchecked(schema, records))
}

/// Samples each group of `pool` to its requested `(n, m, c)` and concatenates the samples.
pub fn build_from_pool(pool: &Dataset, spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let gk = pool.schema().index_of(GROUP_ATTR)?;
    let mut parts = Vec::with_capacity(spec.per_group.len());
    for (gi, g) in spec.per_group.iter().enumerate() {
        let members = pool.filter(|r| r.values[gk] == Value::Cat(gi as u32));
        let seed = rng::derive_seed(spec.seed, &format!("sample/{}", g.group));
        parts.push(sample_with_correlation(&members, g.n, g.m, g.c, seed)?);
    }
    Dataset::concat(&parts)
}

pub fn build_disparate_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    build_from_pool(&generate_synthetic_pool(spec)?, spec)
}

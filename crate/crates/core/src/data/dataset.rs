use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::schema::{AttrKind, AttributeSchema};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Cat(u32),
    Num(f64),
    Missing,
}

impl Value {
    pub fn as_cat(self) -> Option<u32> {
        match self {
            Value::Cat(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub values: Vec<Value>,
}

/// Shared read access for full and sensitive-masked datasets.
pub trait Tabular {
    fn schema(&self) -> &AttributeSchema;
    fn schema_arc(&self) -> &Arc<AttributeSchema>;
    fn records(&self) -> &[Record];

    fn len(&self) -> usize {
        self.records().len()
    }

    fn is_empty(&self) -> bool {
        self.records().is_empty()
    }

    fn ids(&self) -> Vec<u64> {
        self.records().iter().map(|r| r.id).collect()
    }

    /// Category code of the output attribute for row `i`.
    fn label(&self, i: usize) -> u32 {
        let k = self.schema().output_index();
        self.records()[i].values[k]
            .as_cat()
            .expect("validated output value")
    }

    fn categorical(&self, i: usize, attr: usize) -> u32 {
        self.records()[i].values[attr]
            .as_cat()
            .expect("validated categorical value")
    }
}

/// A fully observed dataset; every record carries its sensitive value.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Arc<AttributeSchema>,
    records: Vec<Record>,
}

/// The same records with the sensitive attribute masked, as seen by an adversary.
#[derive(Clone, Debug, PartialEq)]
pub struct NsDataset {
    schema: Arc<AttributeSchema>,
    records: Vec<Record>,
}

fn check_record(schema: &AttributeSchema, r: &Record, allow_missing: Option<usize>) -> Result<()> {
    if r.values.len() != schema.len() {
        return Err(Error::Schema(format!(
            "record {} has {} values, schema has {} attributes",
            r.id,
            r.values.len(),
            schema.len()
        )));
    }
    for (i, (v, a)) in r.values.iter().zip(schema.attributes()).enumerate() {
        let ok = match (v, a.kind) {
            (Value::Cat(c), AttrKind::Categorical) => (*c as usize) < a.values.len(),
            (Value::Num(x), AttrKind::Numeric) => x.is_finite(),
            (Value::Missing, _) => allow_missing == Some(i),
            _ => false,
        };
        if !ok {
            return Err(Error::Schema(format!(
                "record {} has an invalid value for `{}`",
                r.id, a.name
            )));
        }
    }
    Ok(())
}

fn check_unique(records: &[Record]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id) {
            return Err(Error::Schema(format!("duplicate record id {}", r.id)));
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(schema: Arc<AttributeSchema>, records: Vec<Record>) -> Result<Self> {
        for r in &records {
            check_record(&schema, r, None)?;
        }
        check_unique(&records)?;
        Ok(Dataset { schema, records })
    }

    pub(crate) fn new_unchecked(schema: Arc<AttributeSchema>, records: Vec<Record>) -> Self {
        Dataset { schema, records }
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// Masks the sensitive attribute of every record.
    pub fn without_sensitive(&self) -> NsDataset {
        let k = self.schema.sensitive_index();
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut values = r.values.clone();
                values[k] = Value::Missing;
                Record { id: r.id, values }
            })
            .collect();
        NsDataset {
            schema: self.schema.clone(),
            records,
        }
    }

    /// Category code of the sensitive attribute for row `i`.
    pub fn sensitive(&self, i: usize) -> u32 {
        self.categorical(i, self.schema.sensitive_index())
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&Record) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Concatenates datasets that share a schema. Record ids must stay unique.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Degenerate("nothing to concatenate".into()))?;
        let mut records = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if p.schema != first.schema {
                return Err(Error::Schema("cannot concatenate different schemas".into()));
            }
            records.extend(p.records.iter().cloned());
        }
        check_unique(&records)?;
        Ok(Dataset {
            schema: first.schema.clone(),
            records,
        })
    }
}

impl NsDataset {
    pub fn new(schema: Arc<AttributeSchema>, records: Vec<Record>) -> Result<Self> {
        let k = schema.sensitive_index();
        let records: Vec<Record> = records
            .into_iter()
            .map(|mut r| {
                if let Some(v) = r.values.get_mut(k) {
                    *v = Value::Missing;
                }
                r
            })
            .collect();
        for r in &records {
            check_record(&schema, r, Some(k))?;
        }
        check_unique(&records)?;
        Ok(NsDataset { schema, records })
    }

    pub fn select(&self, rows: &[usize]) -> NsDataset {
        NsDataset {
            schema: self.schema.clone(),
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Re-attaches sensitive values (one code per record) to obtain a full dataset.
    pub fn with_sensitive(&self, sensitive: &[u32]) -> Result<Dataset> {
        if sensitive.len() != self.records.len() {
            return Err(Error::Degenerate(format!(
                "{} sensitive values for {} records",
                sensitive.len(),
                self.records.len()
            )));
        }
        let k = self.schema.sensitive_index();
        let records = self
            .records
            .iter()
            .zip(sensitive)
            .map(|(r, &s)| {
                let mut values = r.values.clone();
                values[k] = Value::Cat(s);
                Record { id: r.id, values }
            })
            .collect();
        Dataset::new(self.schema.clone(), records)
    }
}

macro_rules! impl_tabular {
    ($t:ty) => {
        impl Tabular for $t {
            fn schema(&self) -> &AttributeSchema {
                &self.schema
            }
            fn schema_arc(&self) -> &Arc<AttributeSchema> {
                &self.schema
            }
            fn records(&self) -> &[Record] {
                &self.records
            }
        }
    };
}

impl_tabular!(Dataset);
impl_tabular!(NsDataset);

/// Seeded shuffle, then the first `n_train` records train and the rest test.
pub fn train_test_split(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train > ds.len() {
        return Err(Error::Config(format!(
            "train size {n_train} exceeds dataset size {}",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng::stream(seed, "split"));
    let (a, b) = idx.split_at(n_train);
    Ok((ds.select(a), ds.select(b)))
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::Tabular;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMembers {
    pub record_ids: Vec<u64>,
    /// Row positions in the partitioned dataset.
    pub rows: Vec<usize>,
}

/// Records grouped by the value of one categorical attribute. Every declared value has an entry,
/// possibly empty, and iteration follows lexicographic order of the value labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub group_attr: String,
    pub groups: BTreeMap<String, GroupMembers>,
}

impl GroupPartition {
    pub fn non_empty(&self) -> impl Iterator<Item = (&String, &GroupMembers)> {
        self.groups.iter().filter(|(_, m)| !m.rows.is_empty())
    }

    pub fn rows(&self, value: &str) -> &[usize] {
        self.groups.get(value).map(|m| m.rows.as_slice()).unwrap_or(&[])
    }
}

pub fn partition_by_attribute<T: Tabular + ?Sized>(ds: &T, group_attr: &str) -> Result<GroupPartition> {
    let schema = ds.schema();
    let k = schema.index_of(group_attr)?;
    if k == schema.sensitive_index() || k == schema.output_index() {
        return Err(Error::Schema(format!(
            "`{group_attr}` is the sensitive or output attribute and cannot group records"
        )));
    }
    let attr = schema.attribute(k);
    if !attr.is_categorical() {
        return Err(Error::Schema(format!("`{group_attr}` is not categorical")));
    }
    let mut by_code: Vec<GroupMembers> = vec![GroupMembers::default(); attr.values.len()];
    for (i, r) in ds.records().iter().enumerate() {
        let code = r.values[k].as_cat().ok_or_else(|| {
            Error::Schema(format!("record {} has no value for `{group_attr}`", r.id))
        })?;
        let g = &mut by_code[code as usize];
        g.record_ids.push(r.id);
        g.rows.push(i);
    }
    let groups = attr.values.iter().cloned().zip(by_code).collect();
    Ok(GroupPartition {
        group_attr: group_attr.to_string(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::{tests::toy_schema, Dataset, Record, Value};

    fn ds() -> Dataset {
        let recs = (0..7)
            .map(|i| Record {
                id: 100 + i,
                values: vec![
                    Value::Num(0.0),
                    Value::Cat((i % 3 == 0) as u32),
                    Value::Cat(0),
                    Value::Cat(1),
                ],
            })
            .collect();
        Dataset::new(toy_schema(), recs).unwrap()
    }

    #[test]
    fn groups_are_disjoint_and_cover() {
        let p = partition_by_attribute(&ds(), "g").unwrap();
        let mut all: Vec<u64> = p.groups.values().flat_map(|m| m.record_ids.clone()).collect();
        all.sort();
        assert_eq!(all, (100..107).collect::<Vec<_>>());
        assert_eq!(p.groups["b"].record_ids, vec![100, 103, 106]);
    }

    #[test]
    fn single_valued_attribute_gives_one_group() {
        let d = ds().filter(|r| r.values[1] == Value::Cat(0));
        let p = partition_by_attribute(&d, "g").unwrap();
        assert_eq!(p.non_empty().count(), 1);
    }

    #[test]
    fn sensitive_attribute_rejected() {
        assert!(matches!(partition_by_attribute(&ds(), "s"), Err(Error::Schema(_))));
        assert!(matches!(partition_by_attribute(&ds(), "x"), Err(Error::Schema(_))));
    }
}

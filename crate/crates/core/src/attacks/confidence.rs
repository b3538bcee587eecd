use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NsDataset, Tabular, Value};
use crate::error::Result;
use crate::models::{BlackBox, Prediction};

/// Predictions for every record under every candidate sensitive value.
#[derive(Clone, Debug)]
pub struct QueryGrid {
    pub record_ids: Vec<u64>,
    /// True output label per record.
    pub labels: Vec<u32>,
    /// `preds[i][j]`: prediction for record `i` queried with sensitive candidate `j`.
    pub preds: Vec<Vec<Prediction>>,
}

impl QueryGrid {
    /// Queries `model` with each sensitive candidate for every record of `ns`.
    pub fn collect<M: BlackBox + ?Sized>(model: &M, ns: &NsDataset) -> Result<QueryGrid> {
        let schema = ns.schema();
        let k = schema.sensitive_index();
        let n_s = schema.sensitive_values().len() as u32;
        let preds = ns
            .records()
            .par_iter()
            .map(|r| {
                let mut values = r.values.clone();
                (0..n_s)
                    .map(|s| {
                        values[k] = Value::Cat(s);
                        model.query(&values, Some(r.id))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QueryGrid {
            record_ids: ns.ids(),
            labels: (0..ns.len()).map(|i| ns.label(i)).collect(),
            preds,
        })
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    pub fn n_sensitive(&self) -> usize {
        self.preds.first().map_or(0, Vec::len)
    }
}

/// True-label confidence of each record under each sensitive candidate, with the
/// all-candidates-correct flag `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMatrix {
    pub record_ids: Vec<u64>,
    pub labels: Vec<u32>,
    pub n_sensitive: usize,
    pub n_labels: usize,
    /// Row-major `n x n_sensitive`.
    pub values: Vec<f64>,
    pub correct: Vec<bool>,
    pub positive_sensitive: u32,
    pub positive_output: u32,
    pub output_labels: Vec<String>,
}

impl ConfidenceMatrix {
    pub fn from_grid(grid: &QueryGrid, ns: &NsDataset) -> Self {
        let schema = ns.schema();
        let n_s = grid.n_sensitive();
        let mut values = Vec::with_capacity(grid.len() * n_s);
        let mut correct = Vec::with_capacity(grid.len());
        for (row, &y) in grid.preds.iter().zip(&grid.labels) {
            let mut all = true;
            for p in row {
                values.push(p.confidences[y as usize]);
                all &= p.label == y;
            }
            correct.push(all);
        }
        ConfidenceMatrix {
            record_ids: grid.record_ids.clone(),
            labels: grid.labels.clone(),
            n_sensitive: n_s,
            n_labels: schema.output_values().len(),
            values,
            correct,
            positive_sensitive: schema.positive_sensitive(),
            positive_output: schema.positive_output(),
            output_labels: schema.output_values().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_sensitive..(i + 1) * self.n_sensitive]
    }

    /// Row positions of the given record ids, skipping unknown ids.
    pub fn rows_for_ids(&self, ids: &[u64]) -> Vec<usize> {
        let pos: std::collections::HashMap<u64, usize> =
            self.record_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        ids.iter().filter_map(|id| pos.get(id).copied()).collect()
    }
}

/// Issues exactly `n * |S|` queries.
pub fn generate_confidence_matrix<M: BlackBox + ?Sized>(model: &M, ns: &NsDataset) -> Result<ConfidenceMatrix> {
    let grid = QueryGrid::collect(model, ns)?;
    Ok(ConfidenceMatrix::from_grid(&grid, ns))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{Attribute, AttributeSchema, Dataset, Record};
    use crate::error::Error;
    use crate::models::QueryCounter;
    use std::sync::Arc;

    /// Stub target answering through `rule`, failing to encode record `fail_on`.
    pub(crate) struct Stub {
        pub schema: Arc<AttributeSchema>,
        pub rule: fn(&[Value]) -> Prediction,
        pub fail_on: Option<u64>,
    }

    impl BlackBox for Stub {
        fn schema(&self) -> &AttributeSchema {
            &self.schema
        }
        fn query(&self, values: &[Value], record_id: Option<u64>) -> Result<Prediction> {
            if record_id.is_some() && record_id == self.fail_on {
                return Err(Error::Encoding {
                    record_id,
                    message: "bad".into(),
                });
            }
            Ok((self.rule)(values))
        }
    }

    pub(crate) fn schema() -> Arc<AttributeSchema> {
        Arc::new(
            AttributeSchema::new(
                vec![
                    Attribute::numeric("x"),
                    Attribute::categorical("g", &["a", "b"]),
                    Attribute::categorical("s", &["no", "yes"]),
                    Attribute::categorical("y", &["false", "true"]),
                ],
                "s",
                "y",
                "yes",
                "true",
            )
            .unwrap(),
        )
    }

    /// Records with x = id, s and y given per record.
    pub(crate) fn dataset(rows: &[(u32, u32, u32)]) -> Dataset {
        let recs = rows
            .iter()
            .enumerate()
            .map(|(i, &(g, s, y))| Record {
                id: i as u64,
                values: vec![Value::Num(i as f64), Value::Cat(g), Value::Cat(s), Value::Cat(y)],
            })
            .collect();
        Dataset::new(schema(), recs).unwrap()
    }

    pub(crate) fn pred(label: u32, p_true: f64) -> Prediction {
        Prediction {
            label,
            confidences: vec![1.0 - p_true, p_true],
        }
    }

    #[test]
    fn dimensions_and_query_count() {
        let ds = dataset(&vec![(0, 0, 1); 100]);
        let stub = Stub {
            schema: schema(),
            rule: |_| pred(1, 0.8),
            fail_on: None,
        };
        let counter = QueryCounter::new(&stub);
        let cm = generate_confidence_matrix(&counter, &ds.without_sensitive()).unwrap();
        assert_eq!(cm.len(), 100);
        assert_eq!(cm.n_sensitive, 2);
        assert_eq!(counter.count(), 200);
        assert!(cm.correct.iter().all(|&t| t));
        assert!(cm.values.iter().all(|&v| (v - 0.8).abs() < 1e-15));
    }

    #[test]
    fn correct_only_under_one_candidate_gives_false_t() {
        let ds = dataset(&[(0, 0, 1), (0, 1, 1)]);
        let stub = Stub {
            schema: schema(),
            // True label only when queried with the first sensitive value.
            rule: |v| if v[2] == Value::Cat(0) { pred(1, 0.7) } else { pred(0, 0.4) },
            fail_on: None,
        };
        let cm = generate_confidence_matrix(&stub, &ds.without_sensitive()).unwrap();
        assert_eq!(cm.correct, vec![false, false]);
        assert_eq!(cm.row(0), &[0.7, 0.4]);
    }

    #[test]
    fn encoding_errors_carry_record_id() {
        let ds = dataset(&[(0, 0, 1), (0, 1, 1), (1, 1, 0)]);
        let stub = Stub {
            schema: schema(),
            rule: |_| pred(1, 0.5),
            fail_on: Some(2),
        };
        let err = generate_confidence_matrix(&stub, &ds.without_sensitive()).unwrap_err();
        assert!(matches!(err, Error::Encoding { record_id: Some(2), .. }));
    }
}

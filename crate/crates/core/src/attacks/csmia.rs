use super::confidence::QueryGrid;
use super::result::{AttackResult, CaseTag};
use crate::data::NsDataset;
use crate::error::Result;
use crate::models::BlackBox;

/// Picks a sensitive value for one record from its per-candidate predictions.
pub(crate) fn decide(preds: &[crate::models::Prediction], y: u32) -> (u32, CaseTag) {
    let matching: Vec<usize> = (0..preds.len()).filter(|&j| preds[j].label == y).collect();
    match matching.len() {
        1 => (matching[0] as u32, CaseTag::CsmiaCase1),
        0 => {
            let mut best = 0;
            for j in 1..preds.len() {
                if preds[j].confidence() < preds[best].confidence() {
                    best = j;
                }
            }
            (best as u32, CaseTag::CsmiaCase3)
        }
        _ => {
            let mut best = matching[0];
            for &j in &matching[1..] {
                if preds[j].confidence() > preds[best].confidence() {
                    best = j;
                }
            }
            (best as u32, CaseTag::CsmiaCase2)
        }
    }
}

pub(crate) fn from_grid(grid: &QueryGrid, total: usize) -> AttackResult {
    let (predictions, cases) = grid
        .preds
        .iter()
        .zip(&grid.labels)
        .map(|(p, &y)| decide(p, y))
        .unzip();
    AttackResult {
        attack: "csmia".into(),
        record_ids: grid.record_ids.clone(),
        predictions,
        cases,
        coverage: if total == 0 { 0.0 } else { grid.len() as f64 / total as f64 },
        queries: (grid.len() * grid.n_sensitive()) as u64,
    }
}

/// Confidence-score attack: queries every sensitive candidate and keeps the one most consistent
/// with the known label.
pub fn csmia<M: BlackBox + ?Sized>(model: &M, ns: &NsDataset) -> Result<AttackResult> {
    let grid = QueryGrid::collect(model, ns)?;
    Ok(from_grid(&grid, grid.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::confidence::tests::{dataset, pred, schema, Stub};
    use crate::data::Value;
    use crate::models::{Prediction, QueryCounter};

    #[test]
    fn case_one_takes_the_only_match() {
        let preds = [pred(0, 0.3), pred(1, 0.6)];
        assert_eq!(decide(&preds, 1), (1, CaseTag::CsmiaCase1));
    }

    #[test]
    fn case_two_takes_most_confident_match() {
        let preds = [pred(1, 0.9), pred(1, 0.7)];
        assert_eq!(decide(&preds, 1), (0, CaseTag::CsmiaCase2));
    }

    #[test]
    fn case_three_takes_least_confident_wrong_prediction() {
        let preds = [
            Prediction { label: 0, confidences: vec![0.9, 0.1] },
            Prediction { label: 0, confidences: vec![0.6, 0.4] },
        ];
        assert_eq!(decide(&preds, 1), (1, CaseTag::CsmiaCase3));
    }

    #[test]
    fn every_record_gets_one_case_and_queries_are_counted() {
        let ds = dataset(&[(0, 0, 1), (0, 1, 0), (1, 1, 1), (1, 0, 0), (0, 0, 0)]);
        let stub = Stub {
            schema: schema(),
            rule: |v| match (v[0], v[2]) {
                (Value::Num(x), Value::Cat(s)) if x < 2.0 => pred(s, 0.5 + 0.1 * s as f64),
                (_, Value::Cat(s)) => pred(1, 0.6 + 0.2 * s as f64),
                _ => unreachable!(),
            },
            fail_on: None,
        };
        let counter = QueryCounter::new(&stub);
        let r = csmia(&counter, &ds.without_sensitive()).unwrap();
        assert_eq!(counter.count(), 10);
        assert_eq!(r.queries, 10);
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.len(), 5);
        let counts = r.case_counts();
        assert_eq!(counts.values().sum::<usize>(), 5);
        assert_eq!(r.cases[0], CaseTag::CsmiaCase1);
        assert_eq!(r.predictions[0], 1);
        assert_eq!(r.cases[2], CaseTag::CsmiaCase2);
        assert_eq!(r.predictions[2], 1);
        assert_eq!(r.cases[3], CaseTag::CsmiaCase3);
    }
}

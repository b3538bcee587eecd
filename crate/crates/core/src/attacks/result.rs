use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseTag {
    /// Exactly one candidate reproduced the true label.
    CsmiaCase1,
    /// Several candidates reproduced it; the most confident one was taken.
    CsmiaCase2,
    /// None did; the least confident wrong prediction was taken.
    CsmiaCase3,
    LomiaDirect,
    LomiaModel,
    Imputed,
    NeuronThreshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: String,
    pub record_ids: Vec<u64>,
    /// Predicted sensitive category code per attacked record.
    pub predictions: Vec<u32>,
    pub cases: Vec<CaseTag>,
    /// Attacked records over the records the adversary holds.
    pub coverage: f64,
    /// Target-model queries issued.
    pub queries: u64,
}

impl AttackResult {
    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    pub fn case_counts(&self) -> HashMap<CaseTag, usize> {
        let mut m = HashMap::new();
        for c in &self.cases {
            *m.entry(*c).or_insert(0) += 1;
        }
        m
    }

    /// Restriction to the given record ids, keeping this result's order.
    pub fn restrict(&self, ids: &[u64]) -> AttackResult {
        let keep: std::collections::HashSet<u64> = ids.iter().copied().collect();
        let mut out = AttackResult {
            attack: self.attack.clone(),
            record_ids: Vec::new(),
            predictions: Vec::new(),
            cases: Vec::new(),
            coverage: 0.0,
            queries: self.queries,
        };
        for i in 0..self.len() {
            if keep.contains(&self.record_ids[i]) {
                out.record_ids.push(self.record_ids[i]);
                out.predictions.push(self.predictions[i]);
                out.cases.push(self.cases[i]);
            }
        }
        if !self.is_empty() {
            out.coverage = self.coverage * out.len() as f64 / self.len() as f64;
        }
        out
    }
}

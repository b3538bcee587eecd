use serde::{Deserialize, Serialize};

use super::dataset::Tabular;
use crate::error::{Error, Result};

/// Joint counts of a binary sensitive attribute (first letter) and binary output (second letter),
/// `p` for the positive value and `n` for anything else.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub n_pp: usize,
    pub n_pn: usize,
    pub n_np: usize,
    pub n_nn: usize,
}

impl CellCounts {
    pub fn total(&self) -> usize {
        self.n_pp + self.n_pn + self.n_np + self.n_nn
    }

    /// Cells in `(sensitive, output)` order, each coded 1 for the positive value.
    pub fn cells(&self) -> [((u8, u8), usize); 4] {
        [
            ((1, 1), self.n_pp),
            ((1, 0), self.n_pn),
            ((0, 1), self.n_np),
            ((0, 0), self.n_nn),
        ]
    }

    pub fn get(&self, s: u8, y: u8) -> usize {
        match (s, y) {
            (1, 1) => self.n_pp,
            (1, 0) => self.n_pn,
            (0, 1) => self.n_np,
            _ => self.n_nn,
        }
    }

    pub fn add(&mut self, s: bool, y: bool) {
        match (s, y) {
            (true, true) => self.n_pp += 1,
            (true, false) => self.n_pn += 1,
            (false, true) => self.n_np += 1,
            (false, false) => self.n_nn += 1,
        }
    }

    pub fn fits_within(&self, available: &CellCounts) -> bool {
        self.n_pp <= available.n_pp
            && self.n_pn <= available.n_pn
            && self.n_np <= available.n_np
            && self.n_nn <= available.n_nn
    }

    /// Pearson correlation of the two binary variables from the 2x2 table.
    pub fn pearson(&self) -> Result<f64> {
        let [pp, pn, np, nn] = [self.n_pp, self.n_pn, self.n_np, self.n_nn].map(|v| v as f64);
        let denom = ((pp + pn) * (np + nn) * (pp + np) * (pn + nn)).sqrt();
        if denom == 0.0 {
            return Err(Error::Degenerate(
                "a margin of the 2x2 table is empty; correlation is undefined".into(),
            ));
        }
        Ok((pp * nn - pn * np) / denom)
    }

    /// Counts the sensitive/output cells of `rows` (all rows when `None`).
    pub fn of<T: Tabular + ?Sized>(ds: &T, rows: Option<&[usize]>) -> CellCounts {
        let schema = ds.schema();
        let (si, oi) = (schema.sensitive_index(), schema.output_index());
        let (sp, op) = (schema.positive_sensitive(), schema.positive_output());
        let mut c = CellCounts::default();
        let mut tally = |i: usize| {
            let v = &ds.records()[i].values;
            if let (Some(s), Some(y)) = (v[si].as_cat(), v[oi].as_cat()) {
                c.add(s == sp, y == op);
            }
        };
        match rows {
            Some(rows) => rows.iter().for_each(|&i| tally(i)),
            None => (0..ds.len()).for_each(&mut tally),
        }
        c
    }
}

/// Pearson correlation between two categorical attributes, each coded 1 for its positive value.
///
/// The positive value is the schema's designated one for the sensitive and output attributes and
/// the first listed value otherwise.
pub fn pearson_correlation<T: Tabular + ?Sized>(ds: &T, attr_a: &str, attr_b: &str) -> Result<f64> {
    let schema = ds.schema();
    let code = |name: &str| -> Result<(usize, u32)> {
        let i = schema.index_of(name)?;
        if !schema.attribute(i).is_categorical() {
            return Err(Error::Schema(format!("`{name}` is not categorical")));
        }
        let pos = if i == schema.sensitive_index() {
            schema.positive_sensitive()
        } else if i == schema.output_index() {
            schema.positive_output()
        } else {
            0
        };
        Ok((i, pos))
    };
    let (ia, pa) = code(attr_a)?;
    let (ib, pb) = code(attr_b)?;
    let mut c = CellCounts::default();
    for r in ds.records() {
        match (r.values[ia].as_cat(), r.values[ib].as_cat()) {
            (Some(a), Some(b)) => c.add(a == pa, b == pb),
            _ => {
                return Err(Error::Degenerate(format!(
                    "record {} lacks a value for `{attr_a}` or `{attr_b}`",
                    r.id
                )))
            }
        }
    }
    c.pearson()
}

// Float slack so that products such as 1.4 * 1000 / 4 land on the integer they denote.
const ROUND_EPS: f64 = 1e-9;

fn floor_robust(x: f64) -> f64 {
    (x + ROUND_EPS * x.abs().max(1.0)).floor()
}

fn ceil_robust(x: f64) -> f64 {
    (x - ROUND_EPS * x.abs().max(1.0)).ceil()
}

/// Cell counts of a sample of size `n` whose sensitive/output correlation is `c`, with
/// `m` = (#negative sensitive) / (#positive sensitive) and a balanced output.
pub fn cell_counts_for_correlation(n: usize, m: f64, c: f64) -> Result<CellCounts> {
    if n < 4 {
        return Err(Error::Config(format!("sample size {n} is below 4")));
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Config(format!("ratio m = {m} must be positive")));
    }
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::Config(format!("correlation {c} outside [-1, 1]")));
    }
    let nf = n as f64;
    let rm = m.sqrt();
    let np = floor_robust(rm * (rm - c) * nf / (2.0 * (m + 1.0)));
    let nn = floor_robust(rm * (rm + c) * nf / (2.0 * (m + 1.0)));
    let pn = ceil_robust(nf / 2.0 - nn);
    let pp = ceil_robust(nf / 2.0 - np);
    for (cell, v) in [("n_pp", pp), ("n_pn", pn), ("n_np", np), ("n_nn", nn)] {
        if v < 0.0 {
            return Err(Error::Infeasible {
                cell: cell.into(),
                value: v,
            });
        }
    }
    Ok(CellCounts {
        n_pp: pp as usize,
        n_pn: pn as usize,
        n_np: np as usize,
        n_nn: nn as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Pearson over explicit 0/1 vectors, computed from raw moments.
    fn pearson_bruteforce(c: &CellCounts) -> f64 {
        let mut xs = Vec::new();
        for ((s, y), k) in c.cells() {
            for _ in 0..k {
                xs.push((s as f64, y as f64));
            }
        }
        let n = xs.len() as f64;
        let (ma, mb) = xs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (a, b) in &xs {
            sab += (a - ma) * (b - mb);
            saa += (a - ma) * (a - ma);
            sbb += (b - mb) * (b - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn table_pearson_matches_hand_value() {
        let c = CellCounts {
            n_pp: 150,
            n_nn: 150,
            n_pn: 350,
            n_np: 350,
        };
        assert!((c.pearson().unwrap() + 0.4).abs() < 1e-15);
        assert!((pearson_bruteforce(&c) + 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_margin_is_degenerate() {
        let c = CellCounts {
            n_pp: 10,
            n_pn: 5,
            ..Default::default()
        };
        assert!(matches!(c.pearson(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn counts_for_moderate_negative_correlation() {
        let c = cell_counts_for_correlation(1000, 1.0, -0.4).unwrap();
        assert_eq!((c.n_np, c.n_nn, c.n_pn, c.n_pp), (350, 150, 350, 150));
        assert!((c.pearson().unwrap() + 0.4).abs() < 1e-12);
    }

    #[test]
    fn counts_for_strong_positive_correlation() {
        let c = cell_counts_for_correlation(1000, 1.0, 0.9).unwrap();
        assert_eq!((c.n_np, c.n_nn, c.n_pn, c.n_pp), (25, 475, 25, 475));
        assert!((c.pearson().unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unreachable_correlation_is_infeasible() {
        let e = cell_counts_for_correlation(1000, 2.0, 0.9).unwrap_err();
        assert!(matches!(e, Error::Infeasible { ref cell, .. } if cell == "n_pn"));
    }

    proptest! {
        #[test]
        fn counts_respect_structure(n in 4usize..20000, m in 0.5f64..2.0, c in -0.7f64..0.7) {
            let cc = cell_counts_for_correlation(n, m, c).unwrap();
            let pos = cc.n_pp + cc.n_np;
            let neg = cc.n_pn + cc.n_nn;
            prop_assert!(pos.abs_diff(neg) <= 1);
            prop_assert!(cc.total().abs_diff(n) <= 2);
            let lhs = cc.n_nn as f64 - cc.n_np as f64;
            let rhs = (c * m.sqrt() * n as f64 / (m + 1.0)).floor();
            prop_assert!((lhs - rhs).abs() <= 2.0);
        }
    }
}

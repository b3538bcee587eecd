use rand::seq::{IndexedRandom, SliceRandom};

use super::correlation::{cell_counts_for_correlation, CellCounts};
use super::dataset::{Dataset, Tabular};
use crate::error::{Error, Result};
use crate::rng;

/// Row indices of `ds` per (sensitive, output) cell, in `CellCounts::cells` order.
fn cell_rows(ds: &Dataset) -> [Vec<usize>; 4] {
    let schema = ds.schema();
    let (sp, op) = (schema.positive_sensitive(), schema.positive_output());
    let mut rows: [Vec<usize>; 4] = Default::default();
    for i in 0..ds.len() {
        let s = ds.sensitive(i) == sp;
        let y = ds.label(i) == op;
        let slot = match (s, y) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        rows[slot].push(i);
    }
    rows
}

const CELL_NAMES: [&str; 4] = ["n_pp", "n_pn", "n_np", "n_nn"];

/// Draws a sample of size `n` whose sensitive/output correlation is `c` and whose
/// negative-to-positive sensitive ratio is `m`, uniformly without replacement inside each cell.
///
/// Sampled records keep their pool ids and appear in cell order.
pub fn sample_with_correlation(pool: &Dataset, n: usize, m: f64, c: f64, seed: u64) -> Result<Dataset> {
    let want = cell_counts_for_correlation(n, m, c)?;
    sample_cells(pool, &want, seed)
}

pub(crate) fn sample_cells(pool: &Dataset, want: &CellCounts, seed: u64) -> Result<Dataset> {
    let rows = cell_rows(pool);
    let mut rng = rng::stream(seed, "sampler");
    let mut picked = Vec::with_capacity(want.total());
    for (k, ((_, count), available)) in want.cells().iter().zip(&rows).enumerate() {
        if *count > available.len() {
            return Err(Error::InsufficientPool {
                cell: CELL_NAMES[k].into(),
                needed: *count,
                available: available.len(),
            });
        }
        let mut chosen: Vec<usize> = available.choose_multiple(&mut rng, *count).copied().collect();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    Ok(pool.select(&picked))
}

/// Largest `n <= pool.len()` whose cell counts for `(m, c)` fit inside the pool, if any.
pub fn largest_feasible_n(pool: &Dataset, m: f64, c: f64) -> Option<usize> {
    let available = CellCounts::of(pool, None);
    (4..=pool.len())
        .rev()
        .find(|&n| matches!(cell_counts_for_correlation(n, m, c), Ok(w) if w.fits_within(&available)))
}

/// Draws `n` records of which `round(eta * n)` carry the positive sensitive value.
pub fn sample_with_prior(pool: &Dataset, n: usize, eta: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("prior {eta} outside [0, 1]")));
    }
    let sp = pool.schema().positive_sensitive();
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..pool.len()).partition(|&i| pool.sensitive(i) == sp);
    let n_pos = (eta * n as f64).round() as usize;
    let n_neg = n - n_pos;
    for (cell, need, have) in [("positive", n_pos, pos.len()), ("negative", n_neg, neg.len())] {
        if need > have {
            return Err(Error::InsufficientPool {
                cell: format!("{cell} sensitive"),
                needed: need,
                available: have,
            });
        }
    }
    let mut rng = rng::stream(seed, "prior");
    let mut picked: Vec<usize> = pos.choose_multiple(&mut rng, n_pos).copied().collect();
    picked.extend(neg.choose_multiple(&mut rng, n_neg).copied());
    picked.shuffle(&mut rng);
    Ok(pool.select(&picked))
}

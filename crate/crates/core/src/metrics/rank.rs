use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::attacks::Ranking;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub statistic: f64,
    /// Two-sided, from the large-sample approximation.
    pub p_value: f64,
    pub n: usize,
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ItemMismatch);
    }
    if a.len() < 3 {
        return Err(Error::InsufficientData(format!("{} items, at least 3 required", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite score".into()));
    }
    Ok(())
}

/// Kendall's tau-b over paired scores, with the normal-approximation p-value.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    check(a, b)?;
    let n = a.len();
    let (mut s, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).partial_cmp(&0.0).expect("finite") as i64;
            let db = (b[i] - b[j]).partial_cmp(&0.0).expect("finite") as i64;
            s += da * db;
            ties_a += i64::from(da == 0);
            ties_b += i64::from(db == 0);
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_a) * (n0 - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate("a ranking is entirely tied".into()));
    }
    let tau = (s as f64 / denom).clamp(-1.0, 1.0);
    let nf = n as f64;
    let z = 3.0 * tau * (nf * (nf - 1.0)).sqrt() / (2.0 * (2.0 * nf + 5.0)).sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    Ok(RankCorrelation {
        statistic: tau,
        p_value: p.clamp(0.0, 1.0),
        n,
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            r[i] = avg;
        }
        k = e + 1;
    }
    r
}

/// Spearman's rho as the Pearson correlation of average ranks, with a Student-t p-value.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    check(a, b)?;
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len();
    let nf = n as f64;
    let ma = ra.iter().sum::<f64>() / nf;
    let mb = rb.iter().sum::<f64>() / nf;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("a ranking is entirely tied".into()));
    }
    let rho = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * ((nf - 2.0) / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("n >= 3");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(RankCorrelation {
        statistic: rho,
        p_value: p.clamp(0.0, 1.0),
        n,
    })
}

/// Positions of the items of `b` in `a`, after checking both list the same items.
fn positions(a: &[String], b: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort();
    sb.sort();
    if sa != sb || sa.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::ItemMismatch);
    }
    let pa: Vec<f64> = (0..a.len()).map(|i| i as f64).collect();
    let pb = a
        .iter()
        .map(|item| b.iter().position(|x| x == item).expect("same items") as f64)
        .collect();
    Ok((pa, pb))
}

/// Kendall's tau between two orderings of the same items.
pub fn kendall_tau_items(a: &[String], b: &[String]) -> Result<RankCorrelation> {
    let (pa, pb) = positions(a, b)?;
    kendall_tau(&pa, &pb)
}

pub fn spearman_rho_items(a: &[String], b: &[String]) -> Result<RankCorrelation> {
    let (pa, pb) = positions(a, b)?;
    spearman_rho(&pa, &pb)
}

/// Kendall and Spearman agreement of two rankings' scores, paired by group.
pub fn rank_agreement(a: &Ranking, b: &Ranking) -> Result<(RankCorrelation, RankCorrelation)> {
    let mut ga: Vec<&str> = a.groups();
    let mut gb: Vec<&str> = b.groups();
    ga.sort();
    gb.sort();
    if ga != gb {
        return Err(Error::ItemMismatch);
    }
    let sa: Vec<f64> = ga.iter().map(|g| a.score(g).expect("listed")).collect();
    let sb: Vec<f64> = ga.iter().map(|g| b.score(g).expect("listed")).collect();
    Ok((kendall_tau(&sa, &sb)?, spearman_rho(&sa, &sb)?))
}

use serde::{Deserialize, Serialize};

use super::confidence::ConfidenceMatrix;
use crate::error::{Error, Result};

/// Least-squares fit of the positive-sensitive confidence on the other candidates' confidences,
/// over one output label's correctly classified records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionLine {
    pub label: String,
    pub intercept: f64,
    /// One coefficient per non-positive sensitive candidate, in candidate order.
    pub coefficients: Vec<f64>,
    /// `atan(slope)` with one regressor, `atan(|coefficients|)` otherwise.
    pub angle: f64,
    pub n_points: usize,
    /// Standard error of `angle`; only available with a single regressor and more than 2 points.
    pub angle_std_error: Option<f64>,
}

impl RegressionLine {
    fn normal(&self) -> Vec<f64> {
        let mut n: Vec<f64> = self.coefficients.iter().map(|c| -c).collect();
        n.push(1.0);
        n
    }

    /// Unsigned angle between two fitted hyperplanes.
    pub fn angle_to(&self, other: &RegressionLine) -> f64 {
        if self.coefficients.len() == 1 {
            return (self.angle - other.angle).abs();
        }
        let (a, b) = (self.normal(), other.normal());
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        (dot / (na * nb)).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularDifference {
    /// Radians. Signed `angle(positive label) - angle(negative label)` for a binary output with a
    /// binary sensitive attribute, otherwise the mean unsigned pairwise angle.
    pub delta: f64,
    pub lines: Vec<RegressionLine>,
    pub std_error: Option<f64>,
}

pub const DEFAULT_MIN_POINTS: usize = 10;

/// Fits one line per output label through the rows of `subset` (row positions in `cm`) whose
/// predictions were correct for every candidate, and compares their angles.
pub fn angular_difference(cm: &ConfidenceMatrix, subset: &[usize], min_points: usize) -> Result<AngularDifference> {
    let min_points = min_points.max(2);
    let s = cm.n_sensitive;
    if s < 2 {
        return Err(Error::Degenerate("need at least two sensitive candidates".into()));
    }
    let pos = cm.positive_sensitive as usize;
    let others: Vec<usize> = (0..s).filter(|&j| j != pos).collect();
    let mut lines = Vec::with_capacity(cm.n_labels);
    for label in 0..cm.n_labels {
        let rows: Vec<usize> = subset
            .iter()
            .copied()
            .filter(|&i| cm.correct[i] && cm.labels[i] as usize == label)
            .collect();
        if rows.len() < min_points {
            return Err(Error::InsufficientPoints {
                label: cm.output_labels[label].clone(),
                count: rows.len(),
                required: min_points,
            });
        }
        let y: Vec<f64> = rows.iter().map(|&i| cm.row(i)[pos]).collect();
        let x: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| others.iter().map(|&j| cm.row(i)[j]).collect())
            .collect();
        lines.push(fit(&cm.output_labels[label], &x, &y)?);
    }
    let binary = cm.n_labels == 2 && others.len() == 1;
    let (delta, std_error) = if binary {
        let p = cm.positive_output as usize;
        let n = 1 - p;
        let se = match (lines[p].angle_std_error, lines[n].angle_std_error) {
            (Some(a), Some(b)) => Some((a * a + b * b).sqrt()),
            _ => None,
        };
        (lines[p].angle - lines[n].angle, se)
    } else {
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                total += lines[i].angle_to(&lines[j]);
                pairs += 1;
            }
        }
        (total / pairs as f64, None)
    };
    Ok(AngularDifference {
        delta,
        lines,
        std_error,
    })
}

fn fit(label: &str, x: &[Vec<f64>], y: &[f64]) -> Result<RegressionLine> {
    let n = y.len();
    let p = x[0].len();
    let nf = n as f64;
    let my = y.iter().sum::<f64>() / nf;
    let mx: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    // Centered normal equations.
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, &yv) in x.iter().zip(y) {
        for j in 0..p {
            let dj = r[j] - mx[j];
            for k in 0..p {
                a[j][k] += dj * (r[k] - mx[k]);
            }
            a[j][p] += dj * (yv - my);
        }
    }
    let sxx = a[0][0];
    let coefficients = solve(a).ok_or_else(|| {
        Error::Degenerate(format!("confidence scores for label `{label}` do not vary"))
    })?;
    let intercept = my - coefficients.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
    let (angle, angle_std_error) = if p == 1 {
        let b = coefficients[0];
        let se = (n > 2).then(|| {
            let rss: f64 = x
                .iter()
                .zip(y)
                .map(|(r, &yv)| {
                    let e = yv - intercept - b * r[0];
                    e * e
                })
                .sum();
            (rss / (nf - 2.0) / sxx).sqrt() / (1.0 + b * b)
        });
        (b.atan(), se)
    } else {
        (coefficients.iter().map(|c| c * c).sum::<f64>().sqrt().atan(), None)
    };
    Ok(RegressionLine {
        label: label.to_string(),
        intercept,
        coefficients,
        angle,
        n_points: n,
        angle_std_error,
    })
}

/// Gaussian elimination with partial pivoting on an augmented `p x (p+1)` system.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let p = a.len();
    let scale = a.iter().flat_map(|r| r[..p].iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..=p {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut b = vec![0.0; p];
    for r in (0..p).rev() {
        let s: f64 = (r + 1..p).map(|c| a[r][c] * b[c]).sum();
        b[r] = (a[r][p] - s) / a[r][r];
    }
    Some(b)
}

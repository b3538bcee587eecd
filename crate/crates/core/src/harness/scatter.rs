use std::path::{Path, PathBuf};

use crate::attacks::angular::DEFAULT_MIN_POINTS;
use crate::attacks::{angular_difference, ConfidenceMatrix};
use crate::data::GroupPartition;
use crate::error::{Error, Result};

use super::report::{Cell, PlotFile};

/// Per-group `(conf_s_neg, conf_s_pos, label, t)` rows plus one file of fitted line parameters.
/// `groups` must partition the records the matrix was built from.
pub fn confidence_scatter(cm: &ConfidenceMatrix, groups: &GroupPartition, prefix: &str) -> Result<Vec<PlotFile>> {
    if cm.n_sensitive != 2 {
        return Err(Error::Unsupported(format!(
            "scatter export needs a binary sensitive attribute, found {} values",
            cm.n_sensitive
        )));
    }
    let pos = cm.positive_sensitive as usize;
    let neg = 1 - pos;
    let mut files = Vec::new();
    let mut lines = PlotFile::new(
        &format!("{prefix}lines"),
        &["group", "label", "intercept", "slope", "angle", "n_points", "delta"],
    );
    for (group, members) in &groups.groups {
        let mut f = PlotFile::new(
            &format!("{prefix}{group}"),
            &["conf_s_neg", "conf_s_pos", "label", "t"],
        );
        for &r in &members.rows {
            let row = cm.row(r);
            f.rows.push(vec![
                row[neg].into(),
                row[pos].into(),
                cm.output_labels[cm.labels[r] as usize].as_str().into(),
                Cell::Int(i64::from(cm.correct[r])),
            ]);
        }
        files.push(f);
        if let Ok(d) = angular_difference(cm, &members.rows, DEFAULT_MIN_POINTS) {
            for l in &d.lines {
                lines.rows.push(vec![
                    group.as_str().into(),
                    l.label.as_str().into(),
                    l.intercept.into(),
                    l.coefficients[0].into(),
                    l.angle.into(),
                    l.n_points.into(),
                    d.delta.into(),
                ]);
            }
        }
    }
    files.push(lines);
    Ok(files)
}

/// Writes [`confidence_scatter`] output as CSV files into `dir`.
pub fn export_confidence_scatter(cm: &ConfidenceMatrix, groups: &GroupPartition, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = confidence_scatter(cm, groups, "")?;
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut out = Vec::new();
    for f in files {
        let p = dir.join(format!("{}.csv", f.name));
        std::fs::write(&p, f.to_csv()?).map_err(|e| Error::file(&p, e))?;
        out.push(p);
    }
    Ok(out)
}

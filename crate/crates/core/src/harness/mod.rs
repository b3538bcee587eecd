//! Config-driven experiments and their report bundles.

pub mod config;
pub mod report;
pub mod scatter;
mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{AttackKind, DataSource, DefenseSpec, ExperimentConfig, GeneratorOptions, Scenario, TargetedOptions};
pub use report::{read_results, Cell, Manifest, PlotFile, ReportBundle, Results, Row, SubRunRecord, Table, Timing};
pub use scatter::{confidence_scatter, export_confidence_scatter};

use crate::error::Result;

/// Default output root when neither the command line nor the config names one.
pub const OUT_ENV: &str = "DVAUDIT_OUT";

/// `override_dir`, else the config's `output_dir`, else `$DVAUDIT_OUT/<id>`, else `dvaudit-out/<id>`.
pub fn output_dir(cfg: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    if let Some(d) = &cfg.output_dir {
        return cfg.resolve(d);
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("dvaudit-out"));
    root.join(&cfg.id)
}

/// Runs the scenario. Sub-run failures are recorded in the bundle rather than returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let start = Instant::now();
    log::info!("running scenario {} ({})", cfg.id, cfg.scenario.kind());
    let mut out = scenarios::run(cfg)?;
    let mut plots = Vec::new();
    let mut artifacts = Vec::new();
    let mut models = Vec::new();
    let mut records = Vec::new();
    let mut timing = Timing::default();
    for s in out.sub_runs.drain(..) {
        timing.sub_runs.push((s.name.clone(), s.seconds));
        match s.outcome {
            Ok(o) => {
                plots.extend(o.plots);
                artifacts.extend(o.artifacts);
                models.extend(o.models);
                records.push(SubRunRecord {
                    name: s.name,
                    seed: s.seed,
                    ok: true,
                    error: None,
                    model_hashes: o.model_hashes,
                    queries: o.queries,
                });
            }
            Err(e) => records.push(SubRunRecord {
                name: s.name,
                seed: s.seed,
                ok: false,
                error: Some(e.to_string()),
                model_hashes: Vec::new(),
                queries: 0,
            }),
        }
    }
    timing.total_seconds = start.elapsed().as_secs_f64();
    let kind = cfg.scenario.kind().to_string();
    Ok(ReportBundle {
        manifest: Manifest {
            format: report::REPORT_FORMAT.into(),
            version: report::REPORT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            scenario: cfg.id.clone(),
            kind: kind.clone(),
            seed: cfg.seed,
            config: serde_json::to_value(cfg)?,
            sub_runs: records,
        },
        results: Results {
            scenario: cfg.id.clone(),
            kind,
            tables: out.tables,
        },
        plots,
        artifacts,
        models,
        timing,
    })
}

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{AttackKind, DataSource, DefenseSpec, ExperimentConfig, Scenario, TargetedOptions};
use super::report::{Cell, PlotFile, Row, Table};
use super::scatter::confidence_scatter;
use crate::attacks::disparity::group_scores;
use crate::attacks::{
    baseline_ranking_via_aux, csmia, generate_confidence_matrix, imputation_attack, lomia, neuron_importance_attack,
    targeted_imputation_baseline, targeted_nested, targeted_single, AttackResult, BaseAttack, ImputationMode,
    LomiaOptions, NeuronOptions, Ranking, TargetedAttackConfig,
};
use crate::data::{
    adult, build_disparate_dataset, largest_feasible_n, load_dataset, partition_by_attribute,
    sample_with_correlation, sample_with_prior, train_test_split, AttributeSchema, CellCounts, Dataset, Tabular,
};
use crate::defense::{bcorr, damir_train, DamirConfig, MiEstimator, VulnerableGroup};
use crate::error::{Error, Result};
use crate::metrics::{
    asrd_from_result, attack_success_rate, fairness_metrics, group_asr, kendall_tau, spearman_rho, ASRReport,
};
use crate::models::{train_target_model, ModelConfig, TargetModel};
use crate::rng::derive_seed;

pub(crate) const ERRORS: &str = "errors";

#[derive(Default)]
pub(crate) struct SubOutput {
    pub rows: Vec<(String, Row)>,
    pub plots: Vec<PlotFile>,
    pub artifacts: Vec<(String, serde_json::Value)>,
    pub models: Vec<(String, Vec<u8>)>,
    pub model_hashes: Vec<String>,
    pub queries: u64,
}

pub(crate) struct SubRun {
    pub name: String,
    pub seed: u64,
    pub outcome: Result<SubOutput>,
    pub seconds: f64,
}

pub(crate) struct ScenarioOutput {
    pub tables: Vec<Table>,
    pub sub_runs: Vec<SubRun>,
}

struct Recorder {
    scenario: String,
    name: String,
    seed: u64,
    out: SubOutput,
}

impl Recorder {
    fn row(&mut self, table: &str, model_hash: &str, cells: Vec<Cell>) {
        self.out.rows.push((
            table.to_string(),
            Row {
                scenario: self.scenario.clone(),
                sub_run: self.name.clone(),
                seed: self.seed,
                model_hash: model_hash.to_string(),
                cells,
            },
        ));
    }

    fn model(&mut self, label: &str, m: &TargetModel) -> Result<String> {
        let bytes = m.to_checkpoint_bytes()?;
        let hash = hex::encode(Sha256::digest(&bytes));
        self.out.models.push((file_name(&format!("{}_{label}", self.name)), bytes));
        self.out.model_hashes.push(hash.clone());
        Ok(hash)
    }

    fn error(&mut self, context: &str, e: &Error) {
        log::warn!("{}: {context}: {e}", self.name);
        self.row(ERRORS, "", vec![context.into(), e.to_string().into()]);
    }

    fn count(&mut self, r: &AttackResult) {
        self.out.queries += r.queries;
    }
}

fn file_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs `body` once per item in parallel, keeping item order in the output.
fn run_subs<T, N, S, B>(cfg: &ExperimentConfig, items: &[T], name: N, seed: S, body: B) -> Vec<SubRun>
where
    T: Sync,
    N: Fn(&T) -> String + Sync,
    S: Fn(&T) -> u64 + Sync,
    B: Fn(&T, &mut Recorder) -> Result<()> + Sync,
{
    items
        .par_iter()
        .map(|item| {
            let start = Instant::now();
            let mut rec = Recorder {
                scenario: cfg.id.clone(),
                name: name(item),
                seed: seed(item),
                out: SubOutput::default(),
            };
            let outcome = body(item, &mut rec).map(|_| rec.out);
            if let Err(e) = &outcome {
                log::error!("sub-run {} failed: {e}", rec.name);
            }
            SubRun {
                name: rec.name,
                seed: rec.seed,
                outcome,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn declare(specs: &[(&str, &[&str])]) -> Vec<Table> {
    let mut t: Vec<Table> = specs.iter().map(|(n, c)| Table::new(n, c)).collect();
    t.push(Table::new(ERRORS, &["context", "error"]));
    t
}

/// Moves sub-run rows into their declared tables, in sub-run order.
fn assemble(mut tables: Vec<Table>, sub_runs: &mut [SubRun]) -> Vec<Table> {
    for s in sub_runs.iter_mut() {
        if let Ok(out) = &mut s.outcome {
            for (name, row) in out.rows.drain(..) {
                match tables.iter_mut().find(|t| t.name == name) {
                    Some(t) => t.rows.push(row),
                    None => unreachable!("undeclared table {name}"),
                }
            }
        }
    }
    tables
}

fn summary_row(cfg: &ExperimentConfig, hashes: &[&str], cells: Vec<Cell>) -> Row {
    let mut sorted: Vec<&str> = hashes.iter().copied().filter(|h| !h.is_empty()).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let model_hash = if sorted.len() == 1 {
        sorted[0].to_string()
    } else {
        hex::encode(Sha256::digest(sorted.join(",").as_bytes()))
    };
    Row {
        scenario: cfg.id.clone(),
        sub_run: "summary".into(),
        seed: cfg.seed,
        model_hash,
        cells,
    }
}

fn model_config(cfg: &ExperimentConfig, hidden: Option<&[usize]>, seed: u64) -> ModelConfig {
    let mut m = cfg.model.clone();
    m.seed = seed;
    if let Some(h) = hidden {
        m.hidden_layers = h.to_vec();
    }
    m
}

fn arch_name(h: &[usize]) -> String {
    h.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
}

fn architectures(cfg: &ExperimentConfig, listed: &[Vec<usize>]) -> Vec<Vec<usize>> {
    if listed.is_empty() {
        vec![cfg.model.hidden_layers.clone()]
    } else {
        listed.to_vec()
    }
}

fn asr_cells(r: &ASRReport) -> Vec<Cell> {
    vec![
        r.accuracy.into(),
        r.precision.into(),
        r.recall.into(),
        r.f1.into(),
        r.macro_f1.into(),
    ]
}

/// Pearson correlation of two equally long samples.
pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn run_attack(
    kind: AttackKind,
    model: &TargetModel,
    train: &Dataset,
    aux: Option<&Dataset>,
    mcfg: &ModelConfig,
) -> Result<AttackResult> {
    let ns = train.without_sensitive();
    let need_aux = || aux.ok_or_else(|| Error::Config(format!("{} needs auxiliary data", kind.name())));
    match kind {
        AttackKind::Csmia => csmia(model, &ns),
        AttackKind::Lomia => lomia(model, &ns, &lomia_options(mcfg)),
        AttackKind::ImputationIdeal | AttackKind::ImputationPractical => imputation_attack(need_aux()?, &ns, mcfg),
        AttackKind::Neuron => neuron_importance_attack(model, need_aux()?, &ns, &NeuronOptions::default()),
    }
}

fn lomia_options(mcfg: &ModelConfig) -> LomiaOptions {
    LomiaOptions {
        model: mcfg.clone(),
        ..LomiaOptions::default()
    }
}

fn base_attack(kind: AttackKind, mcfg: &ModelConfig) -> Option<BaseAttack> {
    match kind {
        AttackKind::Csmia => Some(BaseAttack::Csmia),
        AttackKind::Lomia => Some(BaseAttack::Lomia(lomia_options(mcfg))),
        _ => None,
    }
}

fn group_correlations(ds: &Dataset, group_attr: &str) -> Result<BTreeMap<String, f64>> {
    let parts = partition_by_attribute(ds, group_attr)?;
    let mut out = BTreeMap::new();
    for (g, members) in parts.non_empty() {
        if let Ok(c) = CellCounts::of(ds, Some(&members.rows)).pearson() {
            out.insert(g.clone(), c);
        }
    }
    Ok(out)
}

pub(crate) struct Loaded {
    pub train: Dataset,
    pub heldout: Option<Dataset>,
}

pub(crate) fn load_data(cfg: &ExperimentConfig, source: &DataSource) -> Result<Loaded> {
    match source {
        DataSource::Adult { path, schema } => {
            let split = adult::load_split(&cfg.resolve(path), &cfg.resolve(schema), derive_seed(cfg.seed, "split"))?;
            Ok(Loaded {
                train: split.train,
                heldout: Some(split.test),
            })
        }
        DataSource::Csv {
            path,
            schema,
            test_path,
            test_size,
        } => {
            let schema = Arc::new(AttributeSchema::from_toml_file(&cfg.resolve(schema))?);
            let ds = load_dataset(&cfg.resolve(path), schema.clone())?;
            if let Some(t) = test_path {
                let test = load_dataset(&cfg.resolve(t), schema)?;
                return Ok(Loaded {
                    train: ds,
                    heldout: Some(test),
                });
            }
            match test_size {
                Some(k) if *k >= ds.len() => Err(Error::Config(format!(
                    "test_size {k} leaves no training records out of {}",
                    ds.len()
                ))),
                Some(k) => {
                    let (train, test) = train_test_split(&ds, ds.len() - k, derive_seed(cfg.seed, "split"))?;
                    Ok(Loaded {
                        train,
                        heldout: Some(test),
                    })
                }
                None => Ok(Loaded {
                    train: ds,
                    heldout: None,
                }),
            }
        }
        DataSource::Synthetic { spec, heldout_per_group } => {
            let train = build_disparate_dataset(spec)?;
            let mut h = spec.clone();
            h.seed = derive_seed(spec.seed, "heldout");
            for g in &mut h.per_group {
                g.n = heldout_per_group.unwrap_or(g.n / 4).max(4);
            }
            Ok(Loaded {
                train,
                heldout: Some(build_disparate_dataset(&h)?),
            })
        }
    }
}

fn need_heldout(l: &Loaded) -> Result<&Dataset> {
    l.heldout
        .as_ref()
        .ok_or_else(|| Error::Config("this scenario needs held-out data (test_path or test_size)".into()))
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    match &cfg.scenario {
        Scenario::CorrelationSweep { .. } => correlation_sweep(cfg),
        Scenario::TwoGroupDisparity { .. } => two_group(cfg),
        Scenario::DisparityInference { .. } => disparity(cfg),
        Scenario::TargetedSingle(t) => targeted(cfg, t, false),
        Scenario::TargetedNested(t) => targeted(cfg, t, true),
        Scenario::ImputationDrift { .. } => drift(cfg),
        Scenario::DefenseEval { .. } => defense(cfg),
    }
}

fn correlation_sweep(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let Scenario::CorrelationSweep {
        correlations,
        n,
        m,
        attacks,
        aux_size,
    } = &cfg.scenario
    else {
        unreachable!()
    };
    if attacks.contains(&AttackKind::ImputationPractical) {
        return Err(Error::Validation("correlation-sweep has no shifted auxiliary data".into()));
    }
    let needs_aux = attacks
        .iter()
        .any(|a| matches!(a, AttackKind::ImputationIdeal | AttackKind::Neuron));
    let seed_for = |c: &f64| derive_seed(cfg.seed, &format!("sweep/{c}"));
    let mut sub_runs = run_subs(cfg, correlations, |c| format!("c={c}"), seed_for, |&c, rec| {
        let seed = rec.seed;
        let ds = build_disparate_dataset(&cfg.generator.spec(&[c], *n, *m, seed))?;
        let aux = if needs_aux {
            let a = aux_size.unwrap_or(n / 10).max(4);
            Some(build_disparate_dataset(&cfg.generator.spec(&[c], a, *m, derive_seed(seed, "aux")))?)
        } else {
            None
        };
        let mcfg = model_config(cfg, None, derive_seed(seed, "model"));
        let model = train_target_model(&ds, &mcfg)?;
        let hash = rec.model("target", &model)?;
        for &a in attacks {
            match run_attack(a, &model, &ds, aux.as_ref(), &mcfg).and_then(|r| {
                rec.count(&r);
                Ok((attack_success_rate(&r, &ds)?, r.coverage))
            }) {
                Ok((rep, coverage)) => {
                    let mut cells = vec![c.into(), c.abs().into(), a.name().into()];
                    cells.extend(asr_cells(&rep));
                    cells.push(coverage.into());
                    rec.row("asr", &hash, cells);
                }
                Err(e) => rec.error(a.name(), &e),
            }
        }
        Ok(())
    });
    let mut tables = assemble(
        declare(&[
            ("asr", &["c", "abs_c", "attack", "accuracy", "precision", "recall", "f1", "macro_f1", "coverage"]),
            ("monotonicity", &["attack", "spearman_rho", "spearman_p", "kendall_tau", "kendall_p", "levels"]),
        ]),
        &mut sub_runs,
    );
    let asr = tables[0].clone();
    let mut plot = PlotFile::new("asr_vs_correlation", &["c", "attack", "accuracy", "f1", "macro_f1"]);
    for r in &asr.rows {
        plot.rows.push(vec![
            r.cells[0].clone(),
            r.cells[2].clone(),
            r.cells[3].clone(),
            r.cells[6].clone(),
            r.cells[7].clone(),
        ]);
    }
    for &a in attacks {
        let rows: Vec<&Row> = asr.rows.iter().filter(|r| r.cells[2].as_str() == Some(a.name())).collect();
        let x: Vec<f64> = rows.iter().filter_map(|r| r.cells[1].as_f64()).collect();
        let y: Vec<f64> = rows.iter().filter_map(|r| r.cells[3].as_f64()).collect();
        let hashes: Vec<&str> = rows.iter().map(|r| r.model_hash.as_str()).collect();
        let (rho, tau) = (spearman_rho(&x, &y), kendall_tau(&x, &y));
        let cells = vec![
            a.name().into(),
            rho.as_ref().ok().map(|r| r.statistic).into(),
            rho.as_ref().ok().map(|r| r.p_value).into(),
            tau.as_ref().ok().map(|r| r.statistic).into(),
            tau.as_ref().ok().map(|r| r.p_value).into(),
            x.len().into(),
        ];
        tables[1].rows.push(summary_row(cfg, &hashes, cells));
    }
    if let Some(Ok(first)) = sub_runs.first_mut().map(|s| s.outcome.as_mut()) {
        first.plots.push(plot);
    }
    Ok(ScenarioOutput { tables, sub_runs })
}

fn two_group(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let Scenario::TwoGroupDisparity {
        correlations,
        n_per_group,
        m,
        attacks,
        min_group_size,
    } = &cfg.scenario
    else {
        unreachable!()
    };
    let group_attr = crate::data::synth::GROUP_ATTR;
    let mut sub_runs = run_subs(cfg, &[()], |_| "main".into(), |_| cfg.seed, |_, rec| {
        let ds = build_disparate_dataset(&cfg.generator.spec(correlations, *n_per_group, *m, derive_seed(cfg.seed, "data")))?;
        let mcfg = model_config(cfg, None, derive_seed(cfg.seed, "model"));
        let model = train_target_model(&ds, &mcfg)?;
        let hash = rec.model("target", &model)?;
        let cs = group_correlations(&ds, group_attr)?;
        let ns = ds.without_sensitive();
        let cm = generate_confidence_matrix(&model, &ns)?;
        let parts = partition_by_attribute(&ds, group_attr)?;
        let (entries, _) = group_scores(&cm, &parts, &Default::default());
        for e in &entries {
            rec.row("angular", &hash, vec![e.group.as_str().into(), cs.get(&e.group).copied().into(), e.score.into()]);
        }
        rec.out.plots.extend(confidence_scatter(&cm, &parts, "scatter_")?);
        for &a in attacks {
            let r = match run_attack(a, &model, &ds, None, &mcfg) {
                Ok(r) => r,
                Err(e) => {
                    rec.error(a.name(), &e);
                    continue;
                }
            };
            rec.count(&r);
            for (g, rep) in group_asr(&r, &ds, group_attr, 1)? {
                let c = cs.get(&g).copied();
                rec.row(
                    "group_asr",
                    &hash,
                    vec![a.name().into(), g.into(), c.into(), rep.accuracy.into(), rep.f1.into(), rep.n_records.into()],
                );
            }
            match asrd_from_result(&r, &ds, group_attr, *min_group_size) {
                Ok(d) => rec.row("asrd", &hash, vec![a.name().into(), d.into()]),
                Err(e) => rec.error(&format!("{} asrd", a.name()), &e),
            }
        }
        Ok(())
    });
    let tables = assemble(
        declare(&[
            ("group_asr", &["attack", "group", "c", "accuracy", "f1", "n"]),
            ("asrd", &["attack", "asrd"]),
            ("angular", &["group", "c", "delta"]),
        ]),
        &mut sub_runs,
    );
    Ok(ScenarioOutput { tables, sub_runs })
}

fn disparity(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let Scenario::DisparityInference {
        correlations,
        n_per_group,
        group_attr,
        aux_size,
        ranking,
    } = &cfg.scenario
    else {
        unreachable!()
    };
    let synth_attr = crate::data::synth::GROUP_ATTR.to_string();
    let mut sub_runs = run_subs(cfg, &[()], |_| "main".into(), |_| cfg.seed, |_, rec| {
        let (train, aux, attr) = match &cfg.dataset {
            None => {
                let k = correlations.len();
                let train = build_disparate_dataset(&cfg.generator.spec(correlations, *n_per_group, 1.0, derive_seed(cfg.seed, "data")))?;
                // Shifted auxiliary data: the same features with no sensitive/output correlation in any group.
                let per = aux_size.map(|a| a / k).unwrap_or(*n_per_group).max(4);
                let aux = build_disparate_dataset(&cfg.generator.spec(&vec![0.0; k], per, 1.0, derive_seed(cfg.seed, "aux")))?;
                (train, aux, synth_attr.clone())
            }
            Some(src) => {
                let l = load_data(cfg, src)?;
                let mut aux = need_heldout(&l)?.clone();
                if let Some(a) = aux_size {
                    if *a < aux.len() {
                        aux = train_test_split(&aux, *a, derive_seed(cfg.seed, "aux"))?.0;
                    }
                }
                let attr = group_attr.clone().unwrap_or_else(|| synth_attr.clone());
                (l.train, aux, attr)
            }
        };
        let mcfg = model_config(cfg, None, derive_seed(cfg.seed, "model"));
        let model = train_target_model(&train, &mcfg)?;
        let hash = rec.model("target", &model)?;
        let ns = train.without_sensitive();
        let cm = generate_confidence_matrix(&model, &ns)?;
        rec.out.queries += (cm.len() * cm.n_sensitive) as u64;
        let parts = partition_by_attribute(&train, &attr)?;
        let (entries, unranked) = group_scores(&cm, &parts, ranking);
        let delta_rank = Ranking::new(&attr, entries, unranked, ranking);
        let truth = csmia(&model, &ns)?;
        rec.count(&truth);
        let truth_asr: BTreeMap<String, f64> = group_asr(&truth, &train, &attr, 1)?
            .into_iter()
            .map(|(g, r)| (g, r.accuracy))
            .collect();
        let aux_rank = baseline_ranking_via_aux(&model, &aux, &attr, ranking)?;
        let cs = group_correlations(&train, &attr)?;
        for e in &delta_rank.entries {
            rec.row(
                "groups",
                &hash,
                vec![
                    e.group.as_str().into(),
                    cs.get(&e.group).copied().into(),
                    e.score.into(),
                    e.std_error.into(),
                    truth_asr.get(&e.group).copied().into(),
                    aux_rank.score(&e.group).into(),
                    e.n_records.into(),
                ],
            );
        }
        for u in &delta_rank.unranked {
            rec.row("unranked", &hash, vec![u.group.as_str().into(), u.reason.as_str().into()]);
        }
        for (method, r) in [("disparity-inference", &delta_rank), ("aux-baseline", &aux_rank)] {
            let groups: Vec<&str> = r.groups().into_iter().filter(|g| truth_asr.contains_key(*g)).collect();
            let x: Vec<f64> = groups.iter().map(|g| r.score(g).expect("ranked")).collect();
            let y: Vec<f64> = groups.iter().map(|g| truth_asr[*g]).collect();
            let (tau, rho) = (kendall_tau(&x, &y), spearman_rho(&x, &y));
            if let Err(e) = &tau {
                rec.error(method, e);
            }
            rec.row(
                "ranking_quality",
                &hash,
                vec![
                    method.into(),
                    tau.as_ref().ok().map(|t| t.statistic).into(),
                    tau.as_ref().ok().map(|t| t.p_value).into(),
                    rho.as_ref().ok().map(|t| t.statistic).into(),
                    rho.as_ref().ok().map(|t| t.p_value).into(),
                    groups.len().into(),
                    r.low_confidence.into(),
                ],
            );
        }
        let pairs: Vec<(f64, f64)> = delta_rank
            .entries
            .iter()
            .filter_map(|e| cs.get(&e.group).map(|c| (c.abs(), e.score)))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        rec.row("linearity", &hash, vec![pearson(&x, &y).into(), x.len().into()]);
        if cm.n_sensitive == 2 {
            rec.out.plots.extend(confidence_scatter(&cm, &parts, "scatter_")?);
        }
        rec.out.artifacts.push(("ranking".into(), serde_json::to_value(&delta_rank)?));
        rec.out.artifacts.push(("aux_ranking".into(), serde_json::to_value(&aux_rank)?));
        Ok(())
    });
    let tables = assemble(
        declare(&[
            ("groups", &["group", "c", "delta", "std_error", "csmia_asr", "aux_asr", "n"]),
            ("unranked", &["group", "reason"]),
            (
                "ranking_quality",
                &["method", "kendall_tau", "kendall_p", "spearman_rho", "spearman_p", "groups", "low_confidence"],
            ),
            ("linearity", &["pearson_abs_c_delta", "groups"]),
        ]),
        &mut sub_runs,
    );
    Ok(ScenarioOutput { tables, sub_runs })
}

fn targeted(cfg: &ExperimentConfig, t: &TargetedOptions, nested: bool) -> Result<ScenarioOutput> {
    let loaded = load_data(cfg, cfg.dataset.as_ref().expect("validated"))?;
    let wants = |k: AttackKind| t.attacks.contains(&k);
    let ideal = if wants(AttackKind::ImputationIdeal) {
        let held = need_heldout(&loaded)?;
        Some(match t.aux_size {
            Some(a) if a < held.len() => train_test_split(held, a, derive_seed(cfg.seed, "aux/ideal"))?.0,
            _ => held.clone(),
        })
    } else {
        None
    };
    let practical = if wants(AttackKind::ImputationPractical) {
        let held = need_heldout(&loaded)?;
        Some(sample_with_prior(held, t.practical_size, t.practical_prior, derive_seed(cfg.seed, "aux/practical"))?)
    } else {
        None
    };
    let train = &loaded.train;
    let ns = train.without_sensitive();
    let archs = architectures(cfg, &t.architectures);
    let mut sub_runs = run_subs(cfg, &archs, |h| format!("arch={}", arch_name(h)), |_| cfg.seed, |h, rec| {
        let arch = arch_name(h);
        let mcfg = model_config(cfg, Some(h), derive_seed(cfg.seed, &format!("model/{arch}")));
        let model = train_target_model(train, &mcfg)?;
        let hash = rec.model("target", &model)?;
        let mut subsets = Vec::new();
        for &kappa in &t.kappas {
            let tcfg = TargetedAttackConfig {
                kappa,
                epsilon: t.epsilon,
                query_budget: t.query_budget,
                depth: None,
                seed: derive_seed(cfg.seed, &format!("targeted/{arch}/{kappa}")),
                candidate_attrs: t.candidate_attrs.clone(),
                ranking: t.ranking.clone(),
            };
            let depth = if kappa >= 1.0 {
                0
            } else if nested {
                tcfg.effective_depth()
            } else {
                1
            };
            for &a in &t.attacks {
                let outcome = match (a, base_attack(a, &mcfg)) {
                    (_, Some(base)) if nested => targeted_nested(&model, &ns, &tcfg, &base),
                    (_, Some(base)) => targeted_single(&model, &ns, &tcfg, &base),
                    (AttackKind::ImputationIdeal, None) => targeted_imputation_baseline(
                        ideal.as_ref().expect("loaded"),
                        &ns,
                        &tcfg,
                        &mcfg,
                        ImputationMode::Ideal,
                    ),
                    (_, None) => targeted_imputation_baseline(
                        practical.as_ref().expect("loaded"),
                        &ns,
                        &tcfg,
                        &mcfg,
                        ImputationMode::Practical,
                    ),
                };
                let context = format!("kappa={kappa} {}", a.name());
                let (mut subset, result) = match outcome {
                    Ok(v) => v,
                    Err(e) => {
                        rec.error(&context, &e);
                        continue;
                    }
                };
                rec.count(&result);
                let rep = match attack_success_rate(&result, train) {
                    Ok(r) => r,
                    Err(e) => {
                        rec.error(&context, &e);
                        continue;
                    }
                };
                let mut cells = vec![
                    arch.as_str().into(),
                    kappa.into(),
                    depth.into(),
                    a.name().into(),
                    subset.describe_predicate().into(),
                    subset.achieved_fraction.into(),
                    subset.budget_satisfied.into(),
                    result.len().into(),
                ];
                cells.extend(asr_cells(&rep));
                cells.push(result.queries.into());
                rec.row("targeted", &hash, cells);
                subset.record_ids.clear();
                subsets.push(serde_json::json!({ "kappa": kappa, "attack": a.name(), "subset": subset }));
            }
        }
        rec.out
            .artifacts
            .push((file_name(&format!("subsets_{arch}")), serde_json::Value::Array(subsets)));
        Ok(())
    });
    let tables = assemble(
        declare(&[(
            "targeted",
            &[
                "arch",
                "kappa",
                "depth",
                "attack",
                "predicate",
                "fraction",
                "budget_ok",
                "attacked",
                "accuracy",
                "precision",
                "recall",
                "f1",
                "macro_f1",
                "queries",
            ],
        )]),
        &mut sub_runs,
    );
    Ok(ScenarioOutput { tables, sub_runs })
}

fn drift(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let Scenario::ImputationDrift {
        etas,
        aux_sizes,
        group_attr,
        min_group_size,
    } = &cfg.scenario
    else {
        unreachable!()
    };
    let loaded = load_data(cfg, cfg.dataset.as_ref().expect("validated"))?;
    let held = need_heldout(&loaded)?;
    let train = &loaded.train;
    let mcfg = model_config(cfg, None, derive_seed(cfg.seed, "model"));
    let model = train_target_model(train, &mcfg)?;
    let grid: Vec<Option<(f64, usize)>> = std::iter::once(None)
        .chain(etas.iter().flat_map(|&e| aux_sizes.iter().map(move |&s| Some((e, s)))))
        .collect();
    let name = |g: &Option<(f64, usize)>| match g {
        None => "baselines".to_string(),
        Some((e, s)) => format!("eta={e}/aux={s}"),
    };
    let mut sub_runs = run_subs(cfg, &grid, name, |_| cfg.seed, |g, rec| {
        let hash = rec.model("target", &model)?;
        // Only the first sub-run keeps the shared checkpoint.
        if g.is_some() {
            rec.out.models.clear();
        }
        let ns = train.without_sensitive();
        let Some((eta, size)) = *g else {
            let mut results = Vec::new();
            for (label, r) in [
                ("csmia", csmia(&model, &ns)),
                ("lomia", lomia(&model, &ns, &lomia_options(&mcfg))),
                ("imp-ideal", imputation_attack(held, &ns, &mcfg)),
            ] {
                match r.and_then(|r| attack_success_rate(&r, train).map(|rep| (rep, r))) {
                    Ok((rep, r)) => {
                        rec.count(&r);
                        let mut cells = vec![label.into()];
                        cells.extend(asr_cells(&rep));
                        rec.row("baselines", &hash, cells);
                        results.push((label, r));
                    }
                    Err(e) => rec.error(label, &e),
                }
            }
            if let Some(attr) = group_attr {
                group_drift(rec, &hash, train, held, attr, *min_group_size, &mcfg, results)?;
            }
            return Ok(());
        };
        let seed = derive_seed(cfg.seed, &format!("drift/{eta}/{size}"));
        match sample_with_prior(held, size, eta, seed)
            .and_then(|aux| imputation_attack(&aux, &ns, &mcfg))
            .and_then(|r| attack_success_rate(&r, train))
        {
            Ok(rep) => {
                let mut cells = vec![eta.into(), size.into()];
                cells.extend(asr_cells(&rep));
                rec.row("dataset_drift", &hash, cells);
            }
            Err(e) => rec.error(&rec.name.clone(), &e),
        }
        Ok(())
    });
    let tables = assemble(
        declare(&[
            ("baselines", &["attack", "accuracy", "precision", "recall", "f1", "macro_f1"]),
            ("dataset_drift", &["eta", "aux_size", "accuracy", "precision", "recall", "f1", "macro_f1"]),
            (
                "group_drift",
                &["group", "c", "csmia", "lomia", "imp_ideal", "imp_group_drift", "above_overall", "n"],
            ),
        ]),
        &mut sub_runs,
    );
    Ok(ScenarioOutput { tables, sub_runs })
}

/// Auxiliary data whose every group carries the training set's overall correlation.
#[allow(clippy::too_many_arguments)]
fn group_drift(
    rec: &mut Recorder,
    hash: &str,
    train: &Dataset,
    held: &Dataset,
    attr: &str,
    min_group_size: usize,
    mcfg: &ModelConfig,
    baselines: Vec<(&str, AttackResult)>,
) -> Result<()> {
    let overall = CellCounts::of(train, None).pearson()?;
    let parts = partition_by_attribute(held, attr)?;
    let mut pieces = Vec::new();
    for (g, members) in parts.non_empty() {
        let sub = held.select(&members.rows);
        let counts = CellCounts::of(&sub, None);
        let pos = counts.n_pp + counts.n_pn;
        if pos == 0 || pos == sub.len() {
            continue;
        }
        let m = (sub.len() - pos) as f64 / pos as f64;
        match largest_feasible_n(&sub, m, overall) {
            Some(n) => pieces.push(sample_with_correlation(&sub, n, m, overall, derive_seed(mcfg.seed, &format!("group-aux/{g}")))?),
            None => log::info!("group `{g}` cannot reach correlation {overall:.3} in held-out data"),
        }
    }
    let aux = Dataset::concat(&pieces)?;
    let ns = train.without_sensitive();
    let drifted = imputation_attack(&aux, &ns, mcfg)?;
    let mut per_attack: Vec<BTreeMap<String, f64>> = Vec::new();
    let mut names = Vec::new();
    for (label, r) in baselines.iter().map(|(l, r)| (*l, r)).chain(std::iter::once(("imp-group-drift", &drifted))) {
        names.push(label);
        per_attack.push(
            group_asr(r, train, attr, min_group_size)?
                .into_iter()
                .map(|(g, rep)| (g, rep.accuracy))
                .collect(),
        );
    }
    let cs = group_correlations(train, attr)?;
    let sizes = partition_by_attribute(train, attr)?;
    let col = |label: &str, g: &str| -> Cell {
        names
            .iter()
            .position(|n| *n == label)
            .and_then(|k| per_attack[k].get(g).copied())
            .into()
    };
    for (g, c) in &cs {
        if !per_attack.iter().any(|m| m.contains_key(g)) {
            continue;
        }
        rec.row(
            "group_drift",
            hash,
            vec![
                g.as_str().into(),
                (*c).into(),
                col("csmia", g),
                col("lomia", g),
                col("imp-ideal", g),
                col("imp-group-drift", g),
                (c.abs() > overall.abs()).into(),
                sizes.rows(g).len().into(),
            ],
        );
    }
    Ok(())
}

fn defense(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let Scenario::DefenseEval {
        correlations,
        n_per_group,
        test_per_group,
        m,
        group_attr,
        defenses,
        architectures: archs,
        min_group_size,
    } = &cfg.scenario
    else {
        unreachable!()
    };
    let train = build_disparate_dataset(&cfg.generator.spec(correlations, *n_per_group, *m, derive_seed(cfg.seed, "data")))?;
    let test = build_disparate_dataset(&cfg.generator.spec(correlations, *test_per_group, *m, derive_seed(cfg.seed, "test")))?;
    let cs = group_correlations(&train, group_attr)?;
    let most_vulnerable = cs
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(a.0)))
        .map(|(g, _)| g.clone())
        .ok_or_else(|| Error::Degenerate("no group has a defined correlation".into()))?;
    let mut items = Vec::new();
    for h in architectures(cfg, archs) {
        items.push((h.clone(), None));
        for d in defenses {
            items.push((h.clone(), Some(d.clone())));
        }
    }
    let name = |(h, d): &(Vec<usize>, Option<DefenseSpec>)| {
        format!("arch={}/{}", arch_name(h), d.as_ref().map(|d| d.name()).unwrap_or_else(|| "none".into()))
    };
    let mut sub_runs = run_subs(cfg, &items, name, |_| cfg.seed, |(h, d), rec| {
        let arch = arch_name(h);
        let mcfg = model_config(cfg, Some(h), derive_seed(cfg.seed, &format!("model/{arch}")));
        let (data, model) = match d {
            None => (train.clone(), train_target_model(&train, &mcfg)?),
            Some(DefenseSpec::Bcorr) => {
                let (data, plan) = bcorr(&train, group_attr, derive_seed(cfg.seed, "bcorr"))?;
                let mut summary = serde_json::to_value(&plan)?;
                if let Some(groups) = summary.get_mut("groups").and_then(|g| g.as_array_mut()) {
                    for g in groups {
                        g.as_object_mut().map(|o| o.remove("kept"));
                    }
                }
                rec.out.artifacts.push((file_name(&format!("bcorr_plan_{arch}")), summary));
                let model = train_target_model(&data, &mcfg)?;
                (data, model)
            }
            Some(DefenseSpec::Damir { beta, vulnerable_group }) => {
                let dcfg = DamirConfig {
                    beta: *beta,
                    vulnerable_group: vulnerable_group.clone().unwrap_or(VulnerableGroup {
                        attr: group_attr.clone(),
                        value: most_vulnerable.clone(),
                    }),
                    mi_estimator: MiEstimator::SoftPlugIn,
                    base: mcfg.clone(),
                };
                (train.clone(), damir_train(&train, &dcfg)?)
            }
        };
        let hash = rec.model("target", &model)?;
        let defense = d.as_ref().map(|d| d.name()).unwrap_or_else(|| "none".into());
        let mut asrds = Vec::new();
        for a in [AttackKind::Csmia, AttackKind::Lomia] {
            let r = run_attack(a, &model, &data, None, &mcfg)?;
            rec.count(&r);
            for (g, rep) in group_asr(&r, &data, group_attr, 1)? {
                rec.row(
                    "defense_groups",
                    &hash,
                    vec![arch.as_str().into(), defense.as_str().into(), a.name().into(), g.into(), rep.accuracy.into()],
                );
            }
            asrds.push(asrd_from_result(&r, &data, group_attr, *min_group_size)?);
        }
        let fair = fairness_metrics(&model, &test, group_attr)?;
        let accuracy = model.accuracy(&test)?;
        rec.row(
            "defense",
            &hash,
            vec![
                arch.as_str().into(),
                defense.as_str().into(),
                asrds[0].into(),
                asrds[1].into(),
                fair.eod.into(),
                fair.dpd.into(),
                accuracy.into(),
                (data.len() as f64 / train.len() as f64).into(),
                data.len().into(),
            ],
        );
        Ok(())
    });
    let tables = assemble(
        declare(&[
            (
                "defense",
                &["arch", "defense", "asrd_csmia", "asrd_lomia", "eod", "dpd", "accuracy", "retained", "n_train"],
            ),
            ("defense_groups", &["arch", "defense", "attack", "group", "accuracy"]),
        ]),
        &mut sub_runs,
    );
    Ok(ScenarioOutput { tables, sub_runs })
}

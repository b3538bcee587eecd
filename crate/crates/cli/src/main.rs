//! `dvaudit`: attribute-inference audits of tabular models from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use dvaudit::attacks::{
    baseline_ranking_via_aux, csmia, disparity_inference, imputation_attack, lomia, neuron_importance_attack,
    targeted_imputation_baseline, targeted_nested, targeted_single, AttackResult, BaseAttack, ImputationMode,
    LomiaOptions, NeuronOptions, Ranking, RankingOptions, TargetedAttackConfig,
};
use dvaudit::data::{
    load_dataset, sample_with_correlation, sample_with_prior, write_dataset, AttributeSchema, Dataset, SyntheticSpec,
    Tabular,
};
use dvaudit::defense::{bcorr, damir_train, DamirConfig, MiEstimator, VulnerableGroup};
use dvaudit::harness::{output_dir, read_results, run_experiment, ExperimentConfig};
use dvaudit::metrics::{asrd, attack_success_rate, fairness_metrics, rank_agreement};
use dvaudit::models::{train_attack_model, train_target_model, ModelConfig, TargetModel};
use dvaudit::{Error, Result};

#[derive(Parser)]
#[command(name = "dvaudit", version, about = "Disparate-vulnerability audits for tabular classifiers")]
struct Cli {
    /// Seed overriding the one in configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config for `run`; model config for `train` and the training steps of other commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample with a fixed sensitive/output correlation, or a fixed sensitive prior.
    Sample {
        #[command(flatten)]
        pool: DataArgs,
        #[arg(short, long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        /// Positive sensitive fraction; replaces the correlation constraint.
        #[arg(long)]
        prior: Option<f64>,
    },
    /// Generate a synthetic multi-group dataset and its schema.
    Synth {
        /// TOML synthetic spec; overrides the quick options below.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Per-group correlations, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        correlations: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        n_per_group: usize,
    },
    /// Train a target (predicts the output) or attack (predicts the sensitive value) model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "target")]
        role: Role,
    },
    /// Run an untargeted attribute-inference attack.
    Attack {
        #[arg(value_enum)]
        kind: AttackName,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Auxiliary data with known sensitive values (impute, neuron).
        #[arg(long)]
        aux: Option<PathBuf>,
    },
    /// Rank groups by angular difference, and by auxiliary CSMIA accuracy when `--aux` is given.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        group: String,
        #[arg(long)]
        aux: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        min_group_size: usize,
    },
    /// Attack a budgeted subset of the most vulnerable records.
    Target {
        #[arg(value_enum)]
        mode: TargetMode,
        #[arg(long)]
        kappa: f64,
        #[arg(long, value_enum, default_value = "csmia")]
        attack: BaseName,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        /// Auxiliary data for the imputation baseline.
        #[arg(long)]
        aux: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ideal")]
        aux_mode: AuxMode,
    },
    /// Apply a disparity defense.
    Defend {
        #[arg(value_enum)]
        kind: DefenseName,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        group: String,
        /// Vulnerable group value (damir).
        #[arg(long)]
        value: Option<String>,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
    },
    /// Measure attack success, disparity, fairness or ranking agreement.
    Metrics {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Run an experiment config and write its report bundle.
    Run,
    /// Print the tables of a report bundle.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum Metric {
    /// Success of a saved attack result against truth.
    Asr {
        #[arg(long)]
        result: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Spread of group attack accuracy.
    Asrd {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        group: String,
        #[arg(long, value_enum, default_value = "csmia")]
        attack: BaseName,
        #[arg(long, default_value_t = 30)]
        min_group_size: usize,
    },
    /// Equalized-odds and demographic-parity gaps.
    Fairness {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        group: String,
    },
    /// Kendall and Spearman agreement of two saved rankings.
    Rank {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Target,
    Attack,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackName {
    Csmia,
    Lomia,
    Impute,
    Neuron,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseName {
    Csmia,
    Lomia,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetMode {
    Single,
    Nested,
    ImputationBaseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuxMode {
    Ideal,
    Practical,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefenseName {
    Bcorr,
    Damir,
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let schema = Arc::new(AttributeSchema::from_toml_file(&args.schema)?);
    load_dataset(&args.data, schema)
}

fn load_like(path: &Path, like: &Dataset) -> Result<Dataset> {
    load_dataset(path, like.schema_arc().clone())
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

struct Ctx {
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg: ModelConfig = match &self.config {
            Some(p) => read_toml(p)?,
            None => ModelConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn need_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Validation("this command needs --out".into()))
    }

    /// Pretty JSON to `--out` when given, stdout otherwise.
    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        match &self.out {
            Some(p) => std::fs::write(p, text).map_err(Error::Io),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn base_attack(b: BaseName, ctx: &Ctx) -> Result<BaseAttack> {
    Ok(match b {
        BaseName::Csmia => BaseAttack::Csmia,
        BaseName::Lomia => BaseAttack::Lomia(LomiaOptions {
            model: ctx.model_config()?,
            ..LomiaOptions::default()
        }),
    })
}

fn summarize(result: &AttackResult, truth: &Dataset) -> Result<serde_json::Value> {
    let asr = attack_success_rate(result, truth)?;
    let cases: std::collections::BTreeMap<String, usize> = result
        .case_counts()
        .into_iter()
        .map(|(k, v)| (serde_json::to_value(k).map(|s| s.as_str().unwrap_or_default().to_string()).unwrap_or_default(), v))
        .collect();
    Ok(serde_json::json!({
        "attack": result.attack,
        "records": result.len(),
        "coverage": result.coverage,
        "queries": result.queries,
        "cases": cases,
        "asr": asr,
    }))
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
    };
    match cli.command {
        Command::Sample { pool, n, c, m, prior } => {
            let pool = load(&pool)?;
            let sample = match (c, prior) {
                (Some(c), None) => sample_with_correlation(&pool, n, m, c, ctx.seed())?,
                (None, Some(eta)) => sample_with_prior(&pool, n, eta, ctx.seed())?,
                _ => return Err(Error::Validation("give exactly one of --c and --prior".into())),
            };
            write_dataset(&sample, ctx.need_out()?)?;
            eprintln!("wrote {} records", sample.len());
        }
        Command::Synth {
            spec,
            correlations,
            n_per_group,
        } => {
            let mut spec: SyntheticSpec = match spec {
                Some(p) => read_toml(&p)?,
                None if correlations.is_empty() => {
                    return Err(Error::Validation("give --spec or --correlations".into()));
                }
                None => SyntheticSpec::with_correlations(&correlations, n_per_group, 0),
            };
            if let Some(s) = ctx.seed {
                spec.seed = s;
            }
            let ds = dvaudit::data::build_disparate_dataset(&spec)?;
            let dir = ctx.need_out()?;
            std::fs::create_dir_all(dir).map_err(Error::Io)?;
            write_dataset(&ds, &dir.join("data.csv"))?;
            std::fs::write(dir.join("schema.toml"), ds.schema().to_toml_string()?).map_err(Error::Io)?;
            eprintln!("wrote {} records to {}", ds.len(), dir.display());
        }
        Command::Train { data, role } => {
            let ds = load(&data)?;
            let cfg = ctx.model_config()?;
            let out = ctx.need_out()?;
            match role {
                Role::Target => {
                    let m = train_target_model(&ds, &cfg)?;
                    m.save(out)?;
                    eprintln!("training accuracy {:.4}, checkpoint {}", m.accuracy(&ds)?, m.hash()?);
                }
                Role::Attack => {
                    let m = train_attack_model(&ds, &cfg)?;
                    m.save(out)?;
                    eprintln!("checkpoint {}", m.hash()?);
                }
            }
        }
        Command::Attack { kind, model, data, aux } => {
            let model = TargetModel::load(&model)?;
            let ds = load(&data)?;
            let ns = ds.without_sensitive();
            let aux = aux.map(|p| load_like(&p, &ds)).transpose()?;
            let need_aux = || aux.as_ref().ok_or_else(|| Error::Validation("this attack needs --aux".into()));
            let result = match kind {
                AttackName::Csmia => csmia(&model, &ns)?,
                AttackName::Lomia => lomia(&model, &ns, &LomiaOptions {
                    model: ctx.model_config()?,
                    ..LomiaOptions::default()
                })?,
                AttackName::Impute => imputation_attack(need_aux()?, &ns, &ctx.model_config()?)?,
                AttackName::Neuron => neuron_importance_attack(&model, need_aux()?, &ns, &NeuronOptions::default())?,
            };
            println!("{}", serde_json::to_string_pretty(&summarize(&result, &ds)?)?);
            if let Some(p) = &ctx.out {
                std::fs::write(p, serde_json::to_string(&result)? + "\n").map_err(Error::Io)?;
            }
        }
        Command::Rank {
            model,
            data,
            group,
            aux,
            min_group_size,
        } => {
            let model = TargetModel::load(&model)?;
            let ds = load(&data)?;
            let opts = RankingOptions {
                min_group_size,
                ..RankingOptions::default()
            };
            let ranking = disparity_inference(&model, &ds.without_sensitive(), &group, &opts)?;
            let baseline: Option<Ranking> = match aux {
                Some(p) => Some(baseline_ranking_via_aux(&model, &load_like(&p, &ds)?, &group, &opts)?),
                None => None,
            };
            ctx.emit(&serde_json::json!({ "ranking": ranking, "aux_baseline": baseline }))?;
        }
        Command::Target {
            mode,
            kappa,
            attack,
            model,
            data,
            depth,
            epsilon,
            aux,
            aux_mode,
        } => {
            let ds = load(&data)?;
            let ns = ds.without_sensitive();
            let cfg = TargetedAttackConfig {
                depth,
                epsilon,
                seed: ctx.seed(),
                ..TargetedAttackConfig::new(kappa)
            };
            let (mut subset, result) = match mode {
                TargetMode::ImputationBaseline => {
                    let aux = load_like(&aux.ok_or_else(|| Error::Validation("needs --aux".into()))?, &ds)?;
                    let m = match aux_mode {
                        AuxMode::Ideal => ImputationMode::Ideal,
                        AuxMode::Practical => ImputationMode::Practical,
                    };
                    targeted_imputation_baseline(&aux, &ns, &cfg, &ctx.model_config()?, m)?
                }
                TargetMode::Single | TargetMode::Nested => {
                    let model = TargetModel::load(&model.ok_or_else(|| Error::Validation("needs --model".into()))?)?;
                    let base = base_attack(attack, &ctx)?;
                    if matches!(mode, TargetMode::Single) {
                        targeted_single(&model, &ns, &cfg, &base)?
                    } else {
                        targeted_nested(&model, &ns, &cfg, &base)?
                    }
                }
            };
            subset.record_ids.clear();
            ctx.emit(&serde_json::json!({
                "predicate": subset.describe_predicate(),
                "subset": subset,
                "result": summarize(&result, &ds)?,
            }))?;
        }
        Command::Defend {
            kind,
            data,
            group,
            value,
            beta,
        } => {
            let ds = load(&data)?;
            let out = ctx.need_out()?;
            match kind {
                DefenseName::Bcorr => {
                    let (balanced, plan) = bcorr(&ds, &group, ctx.seed())?;
                    std::fs::create_dir_all(out).map_err(Error::Io)?;
                    write_dataset(&balanced, &out.join("data.csv"))?;
                    std::fs::write(out.join("plan.json"), serde_json::to_string_pretty(&plan)? + "\n").map_err(Error::Io)?;
                    for g in &plan.groups {
                        println!(
                            "{:<16} c {:+.4} -> {:+.4}  kept {}/{}",
                            g.group, g.c_before, g.c_after, g.n_after, g.n_before
                        );
                    }
                    for f in &plan.flags {
                        eprintln!("note: {f}");
                    }
                }
                DefenseName::Damir => {
                    let value = value.ok_or_else(|| Error::Validation("damir needs --value".into()))?;
                    let cfg = DamirConfig {
                        beta,
                        vulnerable_group: VulnerableGroup { attr: group, value },
                        mi_estimator: MiEstimator::SoftPlugIn,
                        base: ctx.model_config()?,
                    };
                    let m = damir_train(&ds, &cfg)?;
                    m.save(out)?;
                    eprintln!("checkpoint {}", m.hash()?);
                }
            }
        }
        Command::Metrics { metric } => match metric {
            Metric::Asr { result, data } => {
                let r: AttackResult = read_json(&result)?;
                ctx.emit(&attack_success_rate(&r, &load(&data)?)?)?;
            }
            Metric::Asrd {
                model,
                data,
                group,
                attack,
                min_group_size,
            } => {
                let model = TargetModel::load(&model)?;
                let d = asrd(&model, &load(&data)?, &group, &base_attack(attack, &ctx)?, min_group_size)?;
                ctx.emit(&serde_json::json!({ "group_attr": group, "asrd": d }))?;
            }
            Metric::Fairness { model, data, group } => {
                let model = TargetModel::load(&model)?;
                ctx.emit(&fairness_metrics(&model, &load(&data)?, &group)?)?;
            }
            Metric::Rank { a, b } => {
                let pick = |v: serde_json::Value| -> Result<Ranking> {
                    let inner = v.get("ranking").cloned().unwrap_or(v);
                    Ok(serde_json::from_value(inner)?)
                };
                let (ra, rb) = (pick(read_json(&a)?)?, pick(read_json(&b)?)?);
                let (tau, rho) = rank_agreement(&ra, &rb)?;
                ctx.emit(&serde_json::json!({ "kendall": tau, "spearman": rho }))?;
            }
        },
        Command::Run => {
            let path = ctx
                .config
                .as_deref()
                .ok_or_else(|| Error::Validation("run needs --config".into()))?;
            let mut cfg = ExperimentConfig::from_file(path)?;
            if let Some(s) = ctx.seed {
                cfg.seed = s;
            }
            let dir = output_dir(&cfg, ctx.out.as_deref());
            let bundle = run_experiment(&cfg)?;
            bundle.write_to(&dir)?;
            print!("{}", bundle.results.render());
            let failed = bundle.manifest.sub_runs.iter().filter(|s| !s.ok).count();
            eprintln!("report written to {}", dir.display());
            if failed > 0 {
                return Err(Error::InsufficientData(format!(
                    "{failed} sub-runs failed; see manifest.json"
                )));
            }
        }
        Command::Report { dir } => print!("{}", read_results(&dir)?.render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

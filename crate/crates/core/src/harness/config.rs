use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::RankingOptions;
use crate::data::{AttributeSchema, SyntheticSpec};
use crate::defense::VulnerableGroup;
use crate::error::{Error, Result};
use crate::models::ModelConfig;

/// Feature settings for scenarios that build their own synthetic groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorOptions {
    pub n_features_numeric: usize,
    pub n_features_categorical: usize,
    pub categorical_levels: usize,
    pub class_separation: f64,
    pub pool_factor: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions {
            n_features_numeric: 4,
            n_features_categorical: 2,
            categorical_levels: 3,
            class_separation: 1.5,
            pool_factor: 4,
        }
    }
}

impl GeneratorOptions {
    /// Groups `g0, g1, ...` with correlations `cs`, `n` records each and ratio `m`.
    pub fn spec(&self, cs: &[f64], n: usize, m: f64, seed: u64) -> SyntheticSpec {
        let mut spec = SyntheticSpec::with_correlations(cs, n, seed);
        spec.n_features_numeric = self.n_features_numeric;
        spec.n_features_categorical = self.n_features_categorical;
        spec.categorical_levels = self.categorical_levels;
        spec.class_separation = self.class_separation;
        spec.pool_factor = self.pool_factor;
        for g in &mut spec.per_group {
            g.m = m;
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// The Adult census extract, split 35,222 / 10,000.
    Adult { path: PathBuf, schema: PathBuf },
    Csv {
        path: PathBuf,
        schema: PathBuf,
        /// Held-out records; otherwise `test_size` records are split off.
        #[serde(default)]
        test_path: Option<PathBuf>,
        #[serde(default)]
        test_size: Option<usize>,
    },
    Synthetic {
        spec: SyntheticSpec,
        /// Same-distribution held-out records per group; a quarter of each group when absent.
        #[serde(default)]
        heldout_per_group: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Csmia,
    Lomia,
    /// Imputation from same-distribution auxiliary data.
    ImputationIdeal,
    /// Imputation from auxiliary data with a shifted sensitive prior.
    ImputationPractical,
    Neuron,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Csmia => "csmia",
            AttackKind::Lomia => "lomia",
            AttackKind::ImputationIdeal => "imp-ideal",
            AttackKind::ImputationPractical => "imp-practical",
            AttackKind::Neuron => "neuron",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DefenseSpec {
    Bcorr,
    Damir {
        beta: f64,
        /// The group with the largest |c| in training data when absent.
        #[serde(default)]
        vulnerable_group: Option<VulnerableGroup>,
    },
}

impl DefenseSpec {
    pub fn name(&self) -> String {
        match self {
            DefenseSpec::Bcorr => "bcorr".into(),
            DefenseSpec::Damir { beta, .. } => format!("damir(beta={beta})"),
        }
    }
}

fn sweep_correlations() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

fn ten_group_correlations() -> Vec<f64> {
    (0..10).map(|k| k as f64 * 0.05).collect()
}

fn two_group_correlations() -> Vec<f64> {
    vec![-0.4, -0.1]
}

fn one() -> f64 {
    1.0
}

fn default_attacks() -> Vec<AttackKind> {
    vec![AttackKind::Csmia, AttackKind::Lomia]
}

fn targeted_attacks() -> Vec<AttackKind> {
    vec![
        AttackKind::Csmia,
        AttackKind::Lomia,
        AttackKind::ImputationIdeal,
        AttackKind::ImputationPractical,
    ]
}

fn default_kappas() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.1]
}

fn default_etas() -> Vec<f64> {
    vec![0.5, 0.4, 0.3, 0.2, 0.1]
}

fn default_aux_sizes() -> Vec<usize> {
    vec![5000, 1000, 500, 100]
}

fn default_epsilon() -> f64 {
    0.02
}

fn default_practical_prior() -> f64 {
    0.2
}

fn default_practical_size() -> usize {
    1000
}

fn default_min_group_size() -> usize {
    30
}

fn default_group_attr() -> String {
    crate::data::synth::GROUP_ATTR.to_string()
}

fn default_defenses() -> Vec<DefenseSpec> {
    vec![DefenseSpec::Bcorr]
}

/// Settings shared by the targeted scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetedOptions {
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default = "targeted_attacks")]
    pub attacks: Vec<AttackKind>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub query_budget: f64,
    #[serde(default)]
    pub candidate_attrs: Option<Vec<String>>,
    /// Hidden-layer widths per model variant; the base model only when empty.
    #[serde(default)]
    pub architectures: Vec<Vec<usize>>,
    /// Ideal auxiliary size drawn from held-out data; all held-out records when absent.
    #[serde(default)]
    pub aux_size: Option<usize>,
    #[serde(default = "default_practical_prior")]
    pub practical_prior: f64,
    #[serde(default = "default_practical_size")]
    pub practical_size: usize,
    #[serde(default)]
    pub ranking: RankingOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    /// One single-group model per correlation level.
    CorrelationSweep {
        #[serde(default = "sweep_correlations")]
        correlations: Vec<f64>,
        n: usize,
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "default_attacks")]
        attacks: Vec<AttackKind>,
        /// Same-distribution auxiliary size for imputation and neuron attacks; n/10 when absent.
        #[serde(default)]
        aux_size: Option<usize>,
    },
    TwoGroupDisparity {
        #[serde(default = "two_group_correlations")]
        correlations: Vec<f64>,
        n_per_group: usize,
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "default_attacks")]
        attacks: Vec<AttackKind>,
        #[serde(default = "default_min_group_size")]
        min_group_size: usize,
    },
    DisparityInference {
        #[serde(default = "ten_group_correlations")]
        correlations: Vec<f64>,
        n_per_group: usize,
        /// Grouping attribute for a loaded dataset; synthetic data always uses `group`.
        #[serde(default)]
        group_attr: Option<String>,
        /// Auxiliary size for the baseline ranking; the training size when absent.
        #[serde(default)]
        aux_size: Option<usize>,
        #[serde(default)]
        ranking: RankingOptions,
    },
    TargetedSingle(TargetedOptions),
    TargetedNested(TargetedOptions),
    ImputationDrift {
        #[serde(default = "default_etas")]
        etas: Vec<f64>,
        #[serde(default = "default_aux_sizes")]
        aux_sizes: Vec<usize>,
        /// Enables the group-level drift study over this attribute.
        #[serde(default)]
        group_attr: Option<String>,
        #[serde(default = "default_min_group_size")]
        min_group_size: usize,
    },
    DefenseEval {
        #[serde(default = "two_group_correlations")]
        correlations: Vec<f64>,
        n_per_group: usize,
        test_per_group: usize,
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "default_group_attr")]
        group_attr: String,
        #[serde(default = "default_defenses")]
        defenses: Vec<DefenseSpec>,
        #[serde(default)]
        architectures: Vec<Vec<usize>>,
        #[serde(default = "default_min_group_size")]
        min_group_size: usize,
    },
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::CorrelationSweep { .. } => "correlation-sweep",
            Scenario::TwoGroupDisparity { .. } => "two-group-disparity",
            Scenario::DisparityInference { .. } => "disparity-inference",
            Scenario::TargetedSingle(_) => "targeted-single",
            Scenario::TargetedNested(_) => "targeted-nested",
            Scenario::ImputationDrift { .. } => "imputation-drift",
            Scenario::DefenseEval { .. } => "defense-eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    /// Relative to the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub generator: GeneratorOptions,
    #[serde(default)]
    pub dataset: Option<DataSource>,
    pub scenario: Scenario,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn check_correlations(cs: &[f64], min: usize) -> Result<()> {
    if cs.len() < min {
        return Err(invalid(format!("need at least {min} correlation levels, got {}", cs.len())));
    }
    if let Some(c) = cs.iter().find(|c| !(-1.0..=1.0).contains(*c)) {
        return Err(invalid(format!("correlation {c} outside [-1, 1]")));
    }
    Ok(())
}

fn check_size(name: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(invalid(format!("{name} = {n} is below {min}")));
    }
    Ok(())
}

fn check_architectures(archs: &[Vec<usize>]) -> Result<()> {
    if archs.iter().any(|a| a.contains(&0)) {
        return Err(invalid("architectures cannot contain zero-width layers"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_file(&self, p: &Path) -> Result<()> {
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(invalid(format!("file {} does not exist", full.display())));
        }
        Ok(())
    }

    /// Checks everything that can be checked without training: fields, ranges and files.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() || self.id.contains(['/', '\\']) {
            return Err(invalid(format!("scenario id `{}` must be a non-empty plain name", self.id)));
        }
        self.model.validate().map_err(|e| invalid(e.to_string()))?;
        if let Some(ds) = &self.dataset {
            match ds {
                DataSource::Adult { path, schema } => {
                    self.check_file(path)?;
                    self.check_file(schema)?;
                    AttributeSchema::from_toml_file(&self.resolve(schema)).map_err(|e| invalid(e.to_string()))?;
                }
                DataSource::Csv {
                    path,
                    schema,
                    test_path,
                    test_size,
                } => {
                    self.check_file(path)?;
                    self.check_file(schema)?;
                    AttributeSchema::from_toml_file(&self.resolve(schema)).map_err(|e| invalid(e.to_string()))?;
                    if let Some(t) = test_path {
                        self.check_file(t)?;
                    }
                    if test_path.is_some() && test_size.is_some() {
                        return Err(invalid("give either test_path or test_size, not both"));
                    }
                }
                DataSource::Synthetic { spec, .. } => spec.validate().map_err(|e| invalid(e.to_string()))?,
            }
        }
        let g = &self.generator;
        if g.n_features_numeric + g.n_features_categorical == 0 || !(g.class_separation >= 0.0) {
            return Err(invalid("generator needs features and a non-negative class separation"));
        }
        match &self.scenario {
            Scenario::CorrelationSweep { correlations, n, m, attacks, aux_size } => {
                check_correlations(correlations, 2)?;
                check_size("n", *n, 20)?;
                if !(*m > 0.0) {
                    return Err(invalid("m must be positive"));
                }
                if attacks.is_empty() {
                    return Err(invalid("attack list is empty"));
                }
                if let Some(a) = aux_size {
                    check_size("aux_size", *a, 4)?;
                }
            }
            Scenario::TwoGroupDisparity {
                correlations,
                n_per_group,
                attacks,
                ..
            } => {
                check_correlations(correlations, 2)?;
                check_size("n_per_group", *n_per_group, 20)?;
                if attacks.iter().any(|a| !matches!(a, AttackKind::Csmia | AttackKind::Lomia)) {
                    return Err(invalid("two-group-disparity supports csmia and lomia only"));
                }
            }
            Scenario::DisparityInference {
                correlations,
                n_per_group,
                group_attr,
                ..
            } => {
                match &self.dataset {
                    None => check_correlations(correlations, 3)?,
                    Some(DataSource::Synthetic { .. }) => {}
                    Some(_) if group_attr.is_none() => {
                        return Err(invalid("disparity-inference on loaded data needs group_attr"));
                    }
                    Some(_) => {}
                }
                check_size("n_per_group", *n_per_group, 20)?;
            }
            Scenario::TargetedSingle(t) | Scenario::TargetedNested(t) => {
                if self.dataset.is_none() {
                    return Err(invalid("targeted scenarios need a dataset"));
                }
                if t.kappas.is_empty() || t.kappas.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
                    return Err(invalid("kappas must be non-empty and inside (0, 1]"));
                }
                if t.attacks.is_empty() || t.attacks.contains(&AttackKind::Neuron) {
                    return Err(invalid("targeted attacks are csmia, lomia, imputation-ideal and imputation-practical"));
                }
                if !(0.0..=1.0).contains(&t.practical_prior) {
                    return Err(invalid("practical_prior outside [0, 1]"));
                }
                if !(t.epsilon > 0.0) || !(t.query_budget > 0.0 && t.query_budget <= 1.0) {
                    return Err(invalid("epsilon must be positive and query_budget inside (0, 1]"));
                }
                check_architectures(&t.architectures)?;
            }
            Scenario::ImputationDrift { etas, aux_sizes, .. } => {
                if self.dataset.is_none() {
                    return Err(invalid("imputation-drift needs a dataset"));
                }
                if etas.is_empty() || etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(invalid("etas must be non-empty and inside [0, 1]"));
                }
                if aux_sizes.is_empty() || aux_sizes.iter().any(|&s| s < 4) {
                    return Err(invalid("aux_sizes must be non-empty and at least 4"));
                }
            }
            Scenario::DefenseEval {
                correlations,
                n_per_group,
                test_per_group,
                defenses,
                architectures,
                group_attr,
                ..
            } => {
                check_correlations(correlations, 2)?;
                check_size("n_per_group", *n_per_group, 20)?;
                check_size("test_per_group", *test_per_group, 4)?;
                check_architectures(architectures)?;
                if group_attr != crate::data::synth::GROUP_ATTR {
                    return Err(invalid("defense-eval groups synthetic records by `group`"));
                }
                for d in defenses {
                    if let DefenseSpec::Damir { beta, .. } = d {
                        if !(beta.is_finite() && *beta >= 0.0) {
                            return Err(invalid(format!("beta {beta} must be non-negative")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

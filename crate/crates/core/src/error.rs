use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible cell counts: {cell} would be {value}")]
    Infeasible { cell: String, value: f64 },

    #[error("insufficient pool records in cell {cell}: need {needed}, have {available} (deficit {})", needed - available)]
    InsufficientPool {
        cell: String,
        needed: usize,
        available: usize,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("encoding error{}: {message}", record_id.map(|id| format!(" (record {id})")).unwrap_or_default())]
    Encoding {
        record_id: Option<u64>,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("label `{label}` has {count} usable points, {required} required")]
    InsufficientPoints {
        label: String,
        count: usize,
        required: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no attribute has two or more rankable groups")]
    NoDisparity,

    #[error("target subset is empty for predicate {0}")]
    EmptyTarget(String),

    #[error("no ground truth for record {0}")]
    MissingTruth(u64),

    #[error("rankings cover different item sets")]
    ItemMismatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid experiment config: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::Validation(_)
                | Error::File { .. }
                | Error::TomlDe(_)
        )
    }
}

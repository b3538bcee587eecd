//! Adult census income data.
//!
//! The bundled schema (`data/adult/schema.toml`) merges marital status into `Married`/`Single`,
//! with `Single` as the sensitive value of interest, and predicts `>50K` income. Rows with `?` in
//! any column are dropped, leaving 45,222 records that split 35,222/10,000 into train and test.

use std::path::Path;
use std::sync::Arc;

use super::dataset::{train_test_split, Dataset, Tabular};
use super::io::load_dataset;
use super::schema::AttributeSchema;
use crate::error::Result;

pub const TRAIN_SIZE: usize = 35_222;
pub const TEST_SIZE: usize = 10_000;

pub struct AdultSplit {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load(csv_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = Arc::new(AttributeSchema::from_toml_file(schema_path)?);
    load_dataset(csv_path, schema)
}

/// Loads and splits with the standard sizes. The test part doubles as same-distribution
/// auxiliary data for imputation.
pub fn load_split(csv_path: &Path, schema_path: &Path, seed: u64) -> Result<AdultSplit> {
    let ds = load(csv_path, schema_path)?;
    let (train, test) = train_test_split(&ds, TRAIN_SIZE.min(ds.len()), seed)?;
    Ok(AdultSplit { train, test })
}

//! Tabular data: schemas, records, sampling and partitioning.

pub mod adult;
pub mod correlation;
pub mod dataset;
pub mod io;
pub mod partition;
pub mod sampler;
pub mod schema;
pub mod synth;

pub use correlation::{cell_counts_for_correlation, pearson_correlation, CellCounts};
pub use dataset::{train_test_split, Dataset, NsDataset, Record, Tabular, Value};
pub use io::{load_dataset, write_dataset};
pub use partition::{partition_by_attribute, GroupPartition};
pub use sampler::{largest_feasible_n, sample_with_correlation, sample_with_prior};
pub use schema::{AttrKind, Attribute, AttributeSchema};
pub use synth::{build_disparate_dataset, generate_synthetic_pool, GroupSpec, SyntheticSpec};

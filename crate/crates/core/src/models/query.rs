use std::sync::atomic::{AtomicU64, Ordering};

use super::classifier::Prediction;
use crate::data::{AttributeSchema, Value};
use crate::error::Result;

/// Label-and-confidence query access to a trained target model.
pub trait BlackBox: Sync {
    fn schema(&self) -> &AttributeSchema;

    /// `values` is a full attribute vector, including a hypothesised sensitive value.
    fn query(&self, values: &[Value], record_id: Option<u64>) -> Result<Prediction>;
}

/// Counts queries forwarded to the wrapped model.
pub struct QueryCounter<'a, M: BlackBox + ?Sized> {
    inner: &'a M,
    count: AtomicU64,
}

impl<'a, M: BlackBox + ?Sized> QueryCounter<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        QueryCounter {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<M: BlackBox + ?Sized> BlackBox for QueryCounter<'_, M> {
    fn schema(&self) -> &AttributeSchema {
        self.inner.schema()
    }

    fn query(&self, values: &[Value], record_id: Option<u64>) -> Result<Prediction> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.query(values, record_id)
    }
}

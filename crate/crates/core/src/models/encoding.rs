use serde::{Deserialize, Serialize};

use crate::data::{AttrKind, Tabular, Value};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    OneHot { attr: usize, width: usize },
    Standardize { attr: usize, mean: f64, std: f64 },
}

/// One-hot categoricals and z-scored numerics, constants frozen from the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputEncoding {
    columns: Vec<ColumnEncoding>,
    dim: usize,
}

impl InputEncoding {
    pub fn fit<T: Tabular + ?Sized>(ds: &T, inputs: &[usize]) -> Result<Self> {
        let schema = ds.schema();
        let n = ds.len() as f64;
        let mut columns = Vec::with_capacity(inputs.len());
        let mut dim = 0;
        for &attr in inputs {
            let a = schema.attribute(attr);
            match a.kind {
                AttrKind::Categorical => {
                    columns.push(ColumnEncoding::OneHot {
                        attr,
                        width: a.values.len(),
                    });
                    dim += a.values.len();
                }
                AttrKind::Numeric => {
                    let mut sum = 0.0;
                    for r in ds.records() {
                        match r.values[attr] {
                            Value::Num(x) => sum += x,
                            _ => {
                                return Err(Error::Encoding {
                                    record_id: Some(r.id),
                                    message: format!("`{}` is not numeric", a.name),
                                })
                            }
                        }
                    }
                    let mean = sum / n;
                    let var = ds
                        .records()
                        .iter()
                        .map(|r| match r.values[attr] {
                            Value::Num(x) => (x - mean) * (x - mean),
                            _ => 0.0,
                        })
                        .sum::<f64>()
                        / n;
                    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                    columns.push(ColumnEncoding::Standardize { attr, mean, std });
                    dim += 1;
                }
            }
        }
        Ok(InputEncoding { columns, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[ColumnEncoding] {
        &self.columns
    }

    pub fn encode_into(&self, values: &[Value], out: &mut [f64], record_id: Option<u64>) -> Result<()> {
        debug_assert_eq!(out.len(), self.dim);
        let err = |message: String| Error::Encoding { record_id, message };
        let mut at = 0;
        for col in &self.columns {
            match *col {
                ColumnEncoding::OneHot { attr, width } => {
                    let v = values.get(attr).copied().unwrap_or(Value::Missing);
                    let c = match v {
                        Value::Cat(c) if (c as usize) < width => c as usize,
                        Value::Cat(c) => return Err(err(format!("category {c} outside domain of attribute {attr}"))),
                        _ => return Err(err(format!("attribute {attr} needs a categorical value"))),
                    };
                    out[at..at + width].fill(0.0);
                    out[at + c] = 1.0;
                    at += width;
                }
                ColumnEncoding::Standardize { attr, mean, std } => {
                    match values.get(attr) {
                        Some(Value::Num(x)) if x.is_finite() => out[at] = (x - mean) / std,
                        _ => return Err(err(format!("attribute {attr} needs a finite number"))),
                    }
                    at += 1;
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, values: &[Value], record_id: Option<u64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.encode_into(values, &mut out, record_id)?;
        Ok(out)
    }

    /// Row-major `n x dim` design matrix.
    pub fn encode_all<T: Tabular + ?Sized>(&self, ds: &T) -> Result<Vec<f64>> {
        let mut x = vec![0.0; ds.len() * self.dim];
        for (r, row) in ds.records().iter().zip(x.chunks_exact_mut(self.dim.max(1))) {
            self.encode_into(&r.values, row, Some(r.id))?;
        }
        Ok(x)
    }
}

use std::path::Path;
use std::sync::Arc;

use super::dataset::{Dataset, Record, Tabular, Value};
use super::schema::{AttrKind, AttributeSchema};
use crate::error::{Error, Result};

/// Column carrying stable record ids when a dataset is written and read back.
pub const ID_COLUMN: &str = "record_id";

enum Col {
    Attr(usize),
    Id,
    Ignored,
}

/// Loads a headed CSV against `schema`.
///
/// Rows holding the schema's missing token in any column are dropped. Record ids come from a
/// `record_id` column when present and are sequential over kept rows otherwise.
pub fn load_dataset(csv_path: &Path, schema: Arc<AttributeSchema>) -> Result<Dataset> {
    let file = std::fs::File::open(csv_path).map_err(|e| Error::file(csv_path, e))?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: Arc<AttributeSchema>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = Vec::with_capacity(headers.len());
    let mut found = vec![false; schema.len()];
    for h in headers.iter() {
        if h == ID_COLUMN {
            cols.push(Col::Id);
        } else if schema.ignore_columns().iter().any(|c| c == h) {
            cols.push(Col::Ignored);
        } else {
            let i = schema
                .index_of(h)
                .map_err(|_| Error::Schema(format!("column `{h}` is not in the schema")))?;
            if found[i] {
                return Err(Error::Schema(format!("column `{h}` appears twice")));
            }
            found[i] = true;
            cols.push(Col::Attr(i));
        }
    }
    if let Some(i) = found.iter().position(|f| !f) {
        return Err(Error::Schema(format!(
            "column `{}` is missing from the file",
            schema.attribute(i).name
        )));
    }

    let missing = schema.missing_token();
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for (row, result) in rdr.records().enumerate() {
        let row = row + 1;
        let rec = result?;
        if missing.is_some_and(|m| rec.iter().any(|f| f == m)) {
            dropped += 1;
            continue;
        }
        let mut values = vec![Value::Missing; schema.len()];
        let mut id = records.len() as u64;
        for (field, col) in rec.iter().zip(&cols) {
            match col {
                Col::Ignored => {}
                Col::Id => {
                    id = field.parse().map_err(|_| Error::Parse {
                        row,
                        column: ID_COLUMN.into(),
                        message: format!("`{field}` is not a record id"),
                    })?;
                }
                Col::Attr(i) => {
                    let a = schema.attribute(*i);
                    values[*i] = match a.kind {
                        AttrKind::Numeric => match field.parse::<f64>() {
                            Ok(x) if x.is_finite() => Value::Num(x),
                            _ => {
                                return Err(Error::Parse {
                                    row,
                                    column: a.name.clone(),
                                    message: format!("`{field}` is not a finite number"),
                                })
                            }
                        },
                        AttrKind::Categorical => {
                            Value::Cat(a.resolve(field).ok_or_else(|| Error::Parse {
                                row,
                                column: a.name.clone(),
                                message: format!("unknown category `{field}`"),
                            })?)
                        }
                    };
                }
            }
        }
        records.push(Record { id, values });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    Dataset::new(schema, records)
}

/// Writes attributes in schema order, preceded by the `record_id` column.
pub fn write_dataset(ds: &impl Tabular, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let schema = ds.schema();
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(schema.attributes().iter().map(|a| a.name.clone()));
    w.write_record(&header)?;
    let missing = schema.missing_token().unwrap_or("");
    for r in ds.records() {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.id.to_string());
        for (v, a) in r.values.iter().zip(schema.attributes()) {
            row.push(match v {
                Value::Cat(c) => a.values[*c as usize].clone(),
                Value::Num(x) => format!("{x:?}"),
                Value::Missing => missing.to_string(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

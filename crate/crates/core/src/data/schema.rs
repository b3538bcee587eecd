use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Categorical,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttrKind,
    /// Ordered category labels. Empty for numeric attributes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    /// Raw labels that collapse onto a category, keyed by the category.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub merge: BTreeMap<String, Vec<String>>,
}

impl Attribute {
    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Attribute {
            name: name.to_string(),
            kind: AttrKind::Categorical,
            values: values.iter().map(|v| v.to_string()).collect(),
            merge: BTreeMap::new(),
        }
    }

    pub fn numeric(name: &str) -> Self {
        Attribute {
            name: name.to_string(),
            kind: AttrKind::Numeric,
            values: Vec::new(),
            merge: BTreeMap::new(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == AttrKind::Categorical
    }

    pub fn value_index(&self, label: &str) -> Option<u32> {
        self.values.iter().position(|v| v == label).map(|i| i as u32)
    }

    /// Resolves a raw CSV label through the merge table, then the value list.
    pub fn resolve(&self, raw: &str) -> Option<u32> {
        if let Some(i) = self.value_index(raw) {
            return Some(i);
        }
        self.merge
            .iter()
            .find(|(_, raws)| raws.iter().any(|r| r == raw))
            .and_then(|(target, _)| self.value_index(target))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SchemaFile {
    attributes: Vec<Attribute>,
    sensitive_attr: String,
    output_attr: String,
    positive_sensitive_value: String,
    positive_output_value: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ignore_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    missing_token: Option<String>,
}

/// Validated attribute schema. Construction fails with [`Error::Schema`] on any inconsistency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    sensitive_attr: String,
    output_attr: String,
    positive_sensitive_value: String,
    positive_output_value: String,
    ignore_columns: Vec<String>,
    missing_token: Option<String>,
    sensitive_index: usize,
    output_index: usize,
    positive_sensitive: u32,
    positive_output: u32,
}

impl TryFrom<SchemaFile> for AttributeSchema {
    type Error = Error;

    fn try_from(f: SchemaFile) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &f.attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
            match a.kind {
                AttrKind::Categorical => {
                    if a.values.is_empty() {
                        return Err(Error::Schema(format!(
                            "categorical attribute `{}` has no values",
                            a.name
                        )));
                    }
                    let distinct: HashSet<_> = a.values.iter().collect();
                    if distinct.len() != a.values.len() {
                        return Err(Error::Schema(format!(
                            "attribute `{}` lists a value twice",
                            a.name
                        )));
                    }
                    for target in a.merge.keys() {
                        if a.value_index(target).is_none() {
                            return Err(Error::Schema(format!(
                                "merge target `{target}` is not a value of `{}`",
                                a.name
                            )));
                        }
                    }
                }
                AttrKind::Numeric => {
                    if !a.values.is_empty() || !a.merge.is_empty() {
                        return Err(Error::Schema(format!(
                            "numeric attribute `{}` cannot list values",
                            a.name
                        )));
                    }
                }
            }
        }
        for c in &f.ignore_columns {
            if seen.contains(c.as_str()) {
                return Err(Error::Schema(format!(
                    "column `{c}` is both an attribute and ignored"
                )));
            }
        }
        let find = |name: &str, role: &str| -> Result<usize> {
            let i = f
                .attributes
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| Error::Schema(format!("{role} attribute `{name}` is not declared")))?;
            if !f.attributes[i].is_categorical() {
                return Err(Error::Schema(format!(
                    "{role} attribute `{name}` must be categorical"
                )));
            }
            Ok(i)
        };
        let sensitive_index = find(&f.sensitive_attr, "sensitive")?;
        let output_index = find(&f.output_attr, "output")?;
        if sensitive_index == output_index {
            return Err(Error::Schema(
                "sensitive and output attributes must differ".into(),
            ));
        }
        let pos = |i: usize, label: &str| {
            f.attributes[i].value_index(label).ok_or_else(|| {
                Error::Schema(format!(
                    "`{label}` is not a value of `{}`",
                    f.attributes[i].name
                ))
            })
        };
        let positive_sensitive = pos(sensitive_index, &f.positive_sensitive_value)?;
        let positive_output = pos(output_index, &f.positive_output_value)?;
        Ok(AttributeSchema {
            attributes: f.attributes,
            sensitive_attr: f.sensitive_attr,
            output_attr: f.output_attr,
            positive_sensitive_value: f.positive_sensitive_value,
            positive_output_value: f.positive_output_value,
            ignore_columns: f.ignore_columns,
            missing_token: f.missing_token,
            sensitive_index,
            output_index,
            positive_sensitive,
            positive_output,
        })
    }
}

impl From<AttributeSchema> for SchemaFile {
    fn from(s: AttributeSchema) -> Self {
        SchemaFile {
            attributes: s.attributes,
            sensitive_attr: s.sensitive_attr,
            output_attr: s.output_attr,
            positive_sensitive_value: s.positive_sensitive_value,
            positive_output_value: s.positive_output_value,
            ignore_columns: s.ignore_columns,
            missing_token: s.missing_token,
        }
    }
}

impl AttributeSchema {
    pub fn new(
        attributes: Vec<Attribute>,
        sensitive_attr: &str,
        output_attr: &str,
        positive_sensitive_value: &str,
        positive_output_value: &str,
    ) -> Result<Self> {
        SchemaFile {
            attributes,
            sensitive_attr: sensitive_attr.into(),
            output_attr: output_attr.into(),
            positive_sensitive_value: positive_sensitive_value.into(),
            positive_output_value: positive_output_value.into(),
            ignore_columns: Vec::new(),
            missing_token: None,
        }
        .try_into()
    }

    pub fn with_ignored(self, columns: &[&str]) -> Result<Self> {
        let mut f = SchemaFile::from(self);
        f.ignore_columns = columns.iter().map(|c| c.to_string()).collect();
        f.try_into()
    }

    pub fn with_missing_token(self, token: &str) -> Self {
        AttributeSchema {
            missing_token: Some(token.to_string()),
            ..self
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(&SchemaFile::from(self.clone()))?)
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute(&self, i: usize) -> &Attribute {
        &self.attributes[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown attribute `{name}`")))
    }

    pub fn sensitive_attr(&self) -> &str {
        &self.sensitive_attr
    }

    pub fn output_attr(&self) -> &str {
        &self.output_attr
    }

    pub fn sensitive_index(&self) -> usize {
        self.sensitive_index
    }

    pub fn output_index(&self) -> usize {
        self.output_index
    }

    pub fn positive_sensitive(&self) -> u32 {
        self.positive_sensitive
    }

    pub fn positive_output(&self) -> u32 {
        self.positive_output
    }

    pub fn sensitive_values(&self) -> &[String] {
        &self.attributes[self.sensitive_index].values
    }

    pub fn output_values(&self) -> &[String] {
        &self.attributes[self.output_index].values
    }

    pub fn ignore_columns(&self) -> &[String] {
        &self.ignore_columns
    }

    pub fn missing_token(&self) -> Option<&str> {
        self.missing_token.as_deref()
    }

    /// Categorical attributes usable for grouping: everything except the sensitive and output attributes.
    pub fn group_candidates(&self) -> Vec<usize> {
        (0..self.attributes.len())
            .filter(|&i| {
                i != self.sensitive_index
                    && i != self.output_index
                    && self.attributes[i].is_categorical()
            })
            .collect()
    }
}

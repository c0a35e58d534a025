use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Declared vocabulary for a categorical column. When absent, the
    /// vocabulary is the sorted set of values found in the whole file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

/// How the label column becomes an integer class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// Binary rule on a numeric column: class 1 when `value op threshold`.
    Threshold {
        op: ThresholdOp,
        threshold: f64,
        #[serde(default = "default_negative_name")]
        negative_name: String,
    },
    /// Direct mapping from raw category string to class index.
    CategoryMap {
        map: BTreeMap<String, usize>,
        class_names: Vec<String>,
    },
}

fn default_negative_name() -> String {
    "negative".to_string()
}

fn default_delimiter() -> String {
    ",".to_string()
}

fn default_missing() -> Vec<String> {
    vec!["?".to_string(), String::new(), "NA".to_string()]
}

/// Declarative description of a labeled CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    pub label_rule: LabelRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_column: Option<String>,
    pub positive_label_name: String,
    /// Single-byte field delimiter.
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    /// Cell contents treated as missing (after trimming).
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| Error::Schema(format!("invalid schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("column '{}' listed twice", col.name)));
            }
            if col.kind == ColumnKind::Categorical {
                if let Some(cats) = &col.categories {
                    let unique: HashSet<_> = cats.iter().collect();
                    if cats.is_empty() || unique.len() != cats.len() {
                        return Err(Error::Schema(format!(
                            "column '{}' has an empty or repeated category list",
                            col.name
                        )));
                    }
                }
            }
        }
        if let Some(label) = self.columns.iter().find(|c| c.name == self.label_column) {
            if label.kind != ColumnKind::Drop {
                return Err(Error::Schema(format!(
                    "label column '{}' cannot also be a feature",
                    label.name
                )));
            }
        }
        if self.feature_columns().next().is_none() {
            return Err(Error::Schema("schema declares no feature columns".into()));
        }
        if self.delimiter.len() != 1 {
            return Err(Error::Schema(format!(
                "delimiter must be a single byte, got {:?}",
                self.delimiter
            )));
        }
        if let LabelRule::CategoryMap { map, class_names } = &self.label_rule {
            if class_names.len() < 2 {
                return Err(Error::Schema("label rule needs at least 2 classes".into()));
            }
            if let Some((raw, &k)) = map.iter().find(|(_, &k)| k >= class_names.len()) {
                return Err(Error::Schema(format!(
                    "label value '{raw}' maps to class {k}, but only {} classes are named",
                    class_names.len()
                )));
            }
        }
        Ok(())
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Drop)
    }

    pub fn class_names(&self) -> Vec<String> {
        match &self.label_rule {
            LabelRule::Threshold { negative_name, .. } => {
                vec![negative_name.clone(), self.positive_label_name.clone()]
            }
            LabelRule::CategoryMap { class_names, .. } => class_names.clone(),
        }
    }

    pub(crate) fn is_missing(&self, cell: &str) -> bool {
        let cell = cell.trim();
        self.missing_values.iter().any(|m| m == cell)
    }
}

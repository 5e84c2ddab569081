use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Describes how a CSV table maps onto features, labels and groups.
///
/// The sensitive and label columns are never part of `columns`, so sensitive
/// values cannot leak into feature vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    pub sensitive_column: String,
    pub label_column: String,
    /// Label strings mapped to 1. When both label lists are empty the label
    /// column must hold literal `0` / `1`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positive_labels: Vec<String>,
    /// Label strings mapped to 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negative_labels: Vec<String>,
    /// Sensitive value of group id `i + 1`. Empty means "assign ids by first
    /// appearance"; otherwise rows with any other value are dropped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<String>,
}

impl FeatureSchema {
    pub fn new(
        columns: Vec<ColumnSpec>,
        sensitive_column: impl Into<String>,
        label_column: impl Into<String>,
    ) -> Result<Self> {
        let schema = Self {
            columns,
            sensitive_column: sensitive_column.into(),
            label_column: label_column.into(),
            positive_labels: Vec::new(),
            negative_labels: Vec::new(),
            groups: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Schema whose every feature column is numeric, e.g. for synthetic data.
    pub fn all_numeric(
        names: impl IntoIterator<Item = impl Into<String>>,
        sensitive_column: impl Into<String>,
        label_column: impl Into<String>,
    ) -> Result<Self> {
        let columns = names
            .into_iter()
            .map(|n| ColumnSpec::new(n, ColumnKind::Numeric))
            .collect();
        Self::new(columns, sensitive_column, label_column)
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if c.name == self.sensitive_column {
                return Err(Error::Schema(format!(
                    "sensitive column '{}' cannot be a feature",
                    c.name
                )));
            }
            if c.name == self.label_column {
                return Err(Error::Schema(format!(
                    "label column '{}' cannot be a feature",
                    c.name
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column '{}'", c.name)));
            }
        }
        if self.sensitive_column == self.label_column {
            return Err(Error::Schema(
                "sensitive and label columns must differ".into(),
            ));
        }
        let mut seen = HashSet::new();
        for g in &self.groups {
            if !seen.insert(g.as_str()) {
                return Err(Error::Schema(format!("duplicate group value '{g}'")));
            }
        }
        for p in &self.positive_labels {
            if self.negative_labels.contains(p) {
                return Err(Error::Schema(format!(
                    "label '{p}' is both positive and negative"
                )));
            }
        }
        Ok(())
    }

    pub fn all_numeric_columns(&self) -> bool {
        self.columns.iter().all(|c| c.kind == ColumnKind::Numeric)
    }

    pub(crate) fn parse_label(&self, raw: &str) -> Option<u8> {
        let raw = raw.trim();
        if self.positive_labels.is_empty() && self.negative_labels.is_empty() {
            return match raw {
                "0" => Some(0),
                "1" => Some(1),
                _ => None,
            };
        }
        if self.positive_labels.iter().any(|p| p == raw) {
            Some(1)
        } else if self.negative_labels.iter().any(|n| n == raw) {
            Some(0)
        } else {
            None
        }
    }

    /// Parse a schema from TOML or JSON text (JSON when it starts with `{`).
    pub fn from_str_auto(text: &str) -> Result<Self> {
        let schema: FeatureSchema = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?
        };
        schema.validate()?;
        Ok(schema)
    }
}

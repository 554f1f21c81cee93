//! Feature schemas: column names, kinds, and a stable fingerprint used to
//! guard checkpoints against being applied to the wrong data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical { cardinality: usize },
}

impl ColumnKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("a schema needs at least one column".into()));
        }
        for (i, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(Error::Schema(format!("column {i} has an empty name")));
            }
            if let ColumnKind::Categorical { cardinality } = col.kind {
                if cardinality == 0 {
                    return Err(Error::Schema(format!(
                        "categorical column '{}' has cardinality 0",
                        col.name
                    )));
                }
            }
        }
        for (i, a) in columns.iter().enumerate() {
            if columns[i + 1..].iter().any(|b| b.name == a.name) {
                return Err(Error::Schema(format!("duplicate column name '{}'", a.name)));
            }
        }
        Ok(FeatureSchema { columns })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    /// Stable 64-bit fingerprint of the full schema (names, kinds,
    /// cardinalities, order). Checkpoints store it and refuse to load against
    /// data with a different one.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("schema serializes");
        fnv1a64(json.as_bytes())
    }
}

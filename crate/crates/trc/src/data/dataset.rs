//! The in-memory dataset: an `N x d` feature matrix plus labels and the
//! schema describing it. Categorical cells hold exact integer codes (stored
//! as `f64`) into per-column sorted vocabularies.

use serde::{Deserialize, Serialize};

use crate::data::schema::{ColumnKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass(usize),
}

impl TaskKind {
    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            TaskKind::Regression => None,
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass(c) => Some(*c),
        }
    }

    /// Width of a prediction head for this task: 1 regression output or one
    /// logit per class.
    pub fn n_outputs(&self) -> usize {
        self.n_classes().unwrap_or(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    values: Matrix,
    labels: Vec<f64>,
    task: TaskKind,
    /// Per-column sorted vocabularies; empty for numerical columns. A
    /// categorical cell value `c` means `categories[col][c]`.
    categories: Vec<Vec<String>>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        values: Matrix,
        labels: Vec<f64>,
        task: TaskKind,
        categories: Vec<Vec<String>>,
    ) -> Result<Self> {
        if values.cols() != schema.n_columns() {
            return Err(Error::Schema(format!(
                "matrix has {} columns but schema declares {}",
                values.cols(),
                schema.n_columns()
            )));
        }
        if labels.len() != values.rows() {
            return Err(Error::Schema(format!(
                "{} labels for {} rows",
                labels.len(),
                values.rows()
            )));
        }
        if categories.len() != schema.n_columns() {
            return Err(Error::Schema(format!(
                "{} category vocabularies for {} columns",
                categories.len(),
                schema.n_columns()
            )));
        }
        values.check_finite("dataset features")?;
        for (j, col) in schema.columns().iter().enumerate() {
            match &col.kind {
                ColumnKind::Numerical => {
                    if !categories[j].is_empty() {
                        return Err(Error::Schema(format!(
                            "numerical column '{}' carries a vocabulary",
                            col.name
                        )));
                    }
                }
                ColumnKind::Categorical { cardinality } => {
                    if categories[j].len() != *cardinality {
                        return Err(Error::Schema(format!(
                            "column '{}' declares cardinality {} but vocabulary has {} entries",
                            col.name,
                            cardinality,
                            categories[j].len()
                        )));
                    }
                    for r in 0..values.rows() {
                        let v = values.get(r, j);
                        if v.fract() != 0.0 || v < 0.0 || v as usize >= *cardinality {
                            return Err(Error::Schema(format!(
                                "row {r}, column '{}': {v} is not a valid code (cardinality {})",
                                col.name, cardinality
                            )));
                        }
                    }
                }
            }
        }
        if let Some(classes) = task.n_classes() {
            for (i, &y) in labels.iter().enumerate() {
                if y.fract() != 0.0 || y < 0.0 || y as usize >= classes {
                    return Err(Error::Schema(format!(
                        "row {i}: label {y} is not a valid class code ({classes} classes)"
                    )));
                }
            }
        } else if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::Schema("non-finite regression label".into()));
        }
        Ok(Dataset {
            schema,
            values,
            labels,
            task,
            categories,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn categories(&self) -> &[Vec<String>] {
        &self.categories
    }

    /// Labels as an `N x 1` matrix (regression targets).
    pub fn labels_matrix(&self) -> Matrix {
        Matrix::from_vec(self.labels.len(), 1, self.labels.clone()).expect("consistent shape")
    }

    /// Labels as class indices; errors for regression tasks.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        if !self.task.is_classification() {
            return Err(Error::invalid(
                "class_labels requested on a regression dataset",
            ));
        }
        Ok(self.labels.iter().map(|&y| y as usize).collect())
    }

    /// Subset by row indices (duplicates allowed, order preserved).
    pub fn take_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let values = self.values.take_rows(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            schema: self.schema.clone(),
            values,
            labels,
            task: self.task,
            categories: self.categories.clone(),
        })
    }

    /// Same rows, new feature matrix (used by preprocessing and noise
    /// injection). Shape must be unchanged.
    pub fn with_features(&self, values: Matrix, labels: Vec<f64>) -> Result<Dataset> {
        if values.rows() != self.values.rows() || values.cols() != self.values.cols() {
            return Err(Error::shape(
                "with_features",
                format!(
                    "{}x{} replacing {}x{}",
                    values.rows(),
                    values.cols(),
                    self.values.rows(),
                    self.values.cols()
                ),
            ));
        }
        if labels.len() != self.labels.len() {
            return Err(Error::shape(
                "with_features",
                format!("{} labels replacing {}", labels.len(), self.labels.len()),
            ));
        }
        values.check_finite("with_features")?;
        Ok(Dataset {
            schema: self.schema.clone(),
            values,
            labels,
            task: self.task,
            categories: self.categories.clone(),
        })
    }

    /// Resolve a raw categorical value to its code. Unknown values — i.e.
    /// values never seen when the vocabulary was built — are an error rather
    /// than a silent new category.
    pub fn category_code(&self, col: usize, raw: &str) -> Result<usize> {
        if col >= self.categories.len() || self.categories[col].is_empty() {
            return Err(Error::invalid(format!("column {col} is not categorical")));
        }
        self.categories[col]
            .binary_search_by(|v| v.as_str().cmp(raw))
            .map_err(|_| {
                Error::invalid(format!(
                    "unknown category '{raw}' for column '{}'",
                    self.schema.column(col).name
                ))
            })
    }
}

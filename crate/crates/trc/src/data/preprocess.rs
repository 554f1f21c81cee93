//! Feature and label preprocessing, fit on train only.
//!
//! Numerical columns get either a z-score or a quantile-to-normal transform;
//! categorical codes pass through untouched (embedding layers consume them
//! directly). Regression labels are z-scored with an exact inverse so metrics
//! can be reported in original units. Everything the transform learned is
//! serializable and travels inside checkpoints.

use serde::{Deserialize, Serialize};

use crate::data::dataset::Dataset;
use crate::data::split::Split;
use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::stats::inv_norm_cdf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    ZScore,
    Quantile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ColumnTransform {
    /// Categorical columns and zero-variance numerical columns.
    Identity,
    ZScore {
        mean: f64,
        std: f64,
    },
    /// Sorted train values; maps v -> probit of its averaged fractional rank.
    Quantile {
        sorted: Vec<f64>,
    },
}

impl ColumnTransform {
    fn apply(&self, v: f64) -> f64 {
        match self {
            ColumnTransform::Identity => v,
            ColumnTransform::ZScore { mean, std } => (v - mean) / std,
            ColumnTransform::Quantile { sorted } => quantile_to_normal(sorted, v),
        }
    }
}

/// Map a value to the standard normal quantile of its rank among the train
/// values. Ties share an averaged rank; values outside the train range are
/// clipped to it, so outputs always stay finite.
fn quantile_to_normal(sorted: &[f64], v: f64) -> f64 {
    let n = sorted.len();
    let v = v.clamp(sorted[0], sorted[n - 1]);
    let lo = sorted.partition_point(|&x| x < v);
    let hi = sorted.partition_point(|&x| x <= v);
    let rank = if hi > lo {
        // v occurs in train at positions lo+1 ..= hi (1-based); average them.
        (lo + 1 + hi) as f64 / 2.0
    } else {
        // v falls strictly between two train values.
        lo as f64 + 0.5
    };
    inv_norm_cdf((rank - 0.5) / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct LabelZScore {
    mean: f64,
    std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    transforms: Vec<ColumnTransform>,
    /// Present for regression tasks only.
    label: Option<LabelZScore>,
}

impl Preprocessor {
    /// Learn per-column transforms (and the label transform for regression)
    /// from a training dataset.
    pub fn fit(train: &Dataset, mode: PreprocessMode) -> Result<Self> {
        if train.n_rows() == 0 {
            return Err(Error::invalid("cannot fit a preprocessor on zero rows"));
        }
        let n = train.n_rows();
        let mut transforms = Vec::with_capacity(train.n_columns());
        for (j, col) in train.schema().columns().iter().enumerate() {
            if col.kind.is_categorical() {
                transforms.push(ColumnTransform::Identity);
                continue;
            }
            let mut vals: Vec<f64> = (0..n).map(|r| train.values().get(r, j)).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max - min < 1e-12 {
                transforms.push(ColumnTransform::Identity);
                continue;
            }
            match mode {
                PreprocessMode::ZScore => {
                    let mean = vals.iter().sum::<f64>() / n as f64;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    transforms.push(ColumnTransform::ZScore {
                        mean,
                        std: var.sqrt(),
                    });
                }
                PreprocessMode::Quantile => {
                    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
                    transforms.push(ColumnTransform::Quantile { sorted: vals });
                }
            }
        }

        let label = if train.task().is_classification() {
            None
        } else {
            let mean = train.labels().iter().sum::<f64>() / n as f64;
            let var = train
                .labels()
                .iter()
                .map(|y| (y - mean) * (y - mean))
                .sum::<f64>()
                / n as f64;
            let std = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
            Some(LabelZScore { mean, std })
        };

        Ok(Preprocessor { transforms, label })
    }

    /// Transform features (and labels, for regression) of any dataset that
    /// matches the fitted column count.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_columns() != self.transforms.len() {
            return Err(Error::Schema(format!(
                "preprocessor fitted on {} columns, dataset has {}",
                self.transforms.len(),
                ds.n_columns()
            )));
        }
        let mut values = Matrix::zeros(ds.n_rows(), ds.n_columns());
        for r in 0..ds.n_rows() {
            for (j, t) in self.transforms.iter().enumerate() {
                values.set(r, j, t.apply(ds.values().get(r, j)));
            }
        }
        let labels = match &self.label {
            Some(l) => ds.labels().iter().map(|y| (y - l.mean) / l.std).collect(),
            None => ds.labels().to_vec(),
        };
        ds.with_features(values, labels)
    }

    /// Apply the fitted transforms to all three parts of a split.
    pub fn apply_split(&self, split: &Split) -> Result<Split> {
        Ok(Split {
            train: self.apply(&split.train)?,
            val: self.apply(&split.val)?,
            test: self.apply(&split.test)?,
        })
    }

    /// Fit on the split's train part, apply to all three parts.
    pub fn fit_apply(split: &Split, mode: PreprocessMode) -> Result<(Preprocessor, Split)> {
        let pre = Preprocessor::fit(&split.train, mode)?;
        Ok((pre.clone(), pre.apply_split(split)?))
    }

    /// Invert the label transform on a column of model outputs, recovering
    /// original units. Identity for classification.
    pub fn denormalize_labels(&self, preds: &Matrix) -> Matrix {
        match &self.label {
            Some(l) => preds.map(|v| v * l.std + l.mean),
            None => preds.clone(),
        }
    }

    pub fn normalize_label(&self, y: f64) -> f64 {
        match &self.label {
            Some(l) => (y - l.mean) / l.std,
            None => y,
        }
    }

    pub fn denormalize_label(&self, y: f64) -> f64 {
        match &self.label {
            Some(l) => y * l.std + l.mean,
            None => y,
        }
    }

    pub fn has_label_transform(&self) -> bool {
        self.label.is_some()
    }
}

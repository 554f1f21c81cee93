//! Empirical per-column sampling and feature-noise injection.
//!
//! The sampler memorises each column's observed values and draws uniformly
//! among them, i.e. it samples the empirical marginal distribution. Because
//! draws come from observed values, categorical codes stay valid and
//! numerical draws stay within the observed support.

use rand::Rng;

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct EmpiricalSampler {
    columns: Vec<Vec<f64>>,
}

impl EmpiricalSampler {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.n_rows() == 0 {
            return Err(Error::invalid("cannot fit a sampler on zero rows"));
        }
        let columns = (0..ds.n_columns())
            .map(|j| (0..ds.n_rows()).map(|r| ds.values().get(r, j)).collect())
            .collect();
        Ok(EmpiricalSampler { columns })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// One draw from column `col`'s empirical marginal.
    pub fn sample<R: Rng + ?Sized>(&self, col: usize, rng: &mut R) -> Result<f64> {
        let values = self
            .columns
            .get(col)
            .ok_or_else(|| Error::invalid(format!("sampler has no column {col}")))?;
        Ok(values[rng.gen_range(0..values.len())])
    }

    /// One independent draw per column — a full synthetic row.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.columns
            .iter()
            .map(|values| values[rng.gen_range(0..values.len())])
            .collect()
    }
}

/// Replace each feature cell, independently with probability `ratio`, by a
/// draw from that column's empirical marginal. Labels are untouched.
pub fn inject_feature_noise<R: Rng + ?Sized>(
    ds: &Dataset,
    ratio: f64,
    sampler: &EmpiricalSampler,
    rng: &mut R,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!(
            "noise ratio must lie in [0, 1], got {ratio}"
        )));
    }
    if sampler.n_columns() != ds.n_columns() {
        return Err(Error::invalid(format!(
            "sampler has {} columns, dataset has {}",
            sampler.n_columns(),
            ds.n_columns()
        )));
    }
    let mut values = Matrix::zeros(ds.n_rows(), ds.n_columns());
    for r in 0..ds.n_rows() {
        for c in 0..ds.n_columns() {
            let v = if rng.gen::<f64>() < ratio {
                sampler.sample(c, rng)?
            } else {
                ds.values().get(r, c)
            };
            values.set(r, c, v);
        }
    }
    ds.with_features(values, ds.labels().to_vec())
}

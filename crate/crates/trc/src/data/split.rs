//! Deterministic shuffled train/validation/test splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(Error::invalid("split ratios must all be positive"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Shuffle row indices with a ChaCha stream seeded by `seed`, then cut:
/// `floor(train * N)` rows for train, `floor(val * N)` for validation, and
/// the remainder for test. Any empty part is an error.
pub fn split_dataset(ds: &Dataset, ratios: &SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let n = ds.n_rows();
    if n < 3 {
        return Err(Error::invalid(format!("cannot three-way split {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_from(seed);
    idx.shuffle(&mut rng);

    let n_train = (ratios.train * n as f64).floor() as usize;
    let n_val = (ratios.val * n as f64).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::invalid(format!(
            "split of {n} rows at {}/{}/{} leaves an empty part ({n_train}/{n_val}/{n_test})",
            ratios.train, ratios.val, ratios.test
        )));
    }
    Ok(Split {
        train: ds.take_rows(&idx[..n_train])?,
        val: ds.take_rows(&idx[n_train..n_train + n_val])?,
        test: ds.take_rows(&idx[n_train + n_val..])?,
    })
}

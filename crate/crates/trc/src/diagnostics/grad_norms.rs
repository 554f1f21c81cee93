//! Per-sample gradient norms over the feature extractor.
//!
//! For each sample, run a single-row forward/backward pass and measure the
//! norm of the loss gradient with respect to the *feature-extractor*
//! parameters only (embeddings and body — the head is excluded, since it is
//! re-initialized downstream anyway). Samples whose gradients are small are
//! the ones the backbone already fits well; they anchor shift estimation.

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::data::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, mse};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradNormEntry {
    /// Row index within the diagnosed dataset.
    pub sample: usize,
    pub norm: f64,
    /// 1-based rank in ascending norm order (ties broken by row index).
    pub rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradNormTable {
    /// Indexed by sample: `entries[i].sample == i`.
    pub entries: Vec<GradNormEntry>,
}

impl GradNormTable {
    /// The `k` sample indices with the smallest norms.
    pub fn lowest(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<&GradNormEntry> = self.entries.iter().collect();
        order.sort_by_key(|e| e.rank);
        order.iter().take(k).map(|e| e.sample).collect()
    }
}

/// `(sum_i |g_i|^p)^(q/p)` over a flat gradient view.
pub fn lp_q_norm(values: impl IntoIterator<Item = f64>, p: f64, q: f64) -> f64 {
    let sum: f64 = values.into_iter().map(|g| g.abs().powf(p)).sum();
    sum.powf(q / p)
}

/// Compute the per-sample gradient-norm table for a dataset. Works on frozen
/// backbones — gradients are computed, never applied.
pub fn per_sample_grad_norms(
    bb: &mut Backbone,
    ds: &Dataset,
    p: f64,
    q: f64,
) -> Result<GradNormTable> {
    if ds.n_rows() == 0 {
        return Err(Error::invalid("gradient norms need at least one sample"));
    }
    if p <= 0.0 || q <= 0.0 {
        return Err(Error::invalid("norm exponents must be positive"));
    }
    let mut entries = Vec::with_capacity(ds.n_rows());
    for i in 0..ds.n_rows() {
        let row = ds.take_rows(&[i])?;
        bb.zero_grads();
        let preds = bb.forward_predictions(row.values())?;
        let (_, grad) = match ds.task() {
            TaskKind::Regression => mse(&preds, &row.labels_matrix())?,
            _ => cross_entropy(&preds, &row.class_labels()?)?,
        };
        bb.backward(&grad)?;
        let flat = bb
            .feature_param_blocks_mut()
            .into_iter()
            .flat_map(|b| b.grad.data().to_vec().into_iter());
        entries.push(GradNormEntry {
            sample: i,
            norm: lp_q_norm(flat, p, q),
            rank: 0,
        });
    }
    bb.zero_grads();

    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[a]
            .norm
            .partial_cmp(&entries[b].norm)
            .expect("finite norms")
            .then(a.cmp(&b))
    });
    for (rank0, &i) in order.iter().enumerate() {
        entries[i].rank = rank0 + 1;
    }
    Ok(GradNormTable { entries })
}

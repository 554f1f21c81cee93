//! Losses specific to correction: shift regression and basis orthogonality.
//!
//! The orthogonality penalty works on the matrix `A` of absolute pairwise
//! cosine similarities between basis rows (diagonal fixed at 1):
//!
//! `L = sum(A) / sum(A^2) + (sum(A) - t)^2`
//!
//! Both terms are minimized exactly when `A` is the identity — the first
//! ratio is smallest when the entries are spread to {0, 1}, the second pins
//! the total at `t` — so together they push the off-diagonal cosines to
//! zero. Its gradient is accumulated analytically; the generic gradient
//! checker validates it in the test suite.

use crate::error::{Error, Result};
use crate::nn::layers::LayerStack;
use crate::nn::loss::mean_sq_l2;
use crate::nn::matrix::Matrix;
use crate::nn::optim::{adamw_step, OptimHp};
use crate::trc::{LESpace, SimulatedShiftSet};

/// Mean squared L2 error of the shift estimator over a simulated set
/// (perturbed and clean pairs enter the same mean). Pure: no caches or
/// gradients are touched.
pub fn shift_loss_value(phi: &LayerStack, set: &SimulatedShiftSet) -> Result<f64> {
    let preds = phi.eval(&set.inputs)?;
    Ok(mean_sq_l2(&preds, &set.targets)?.0)
}

/// One pass over the simulated set in sequential chunks, updating only the
/// shift estimator. Returns the mean per-chunk loss.
pub fn shift_epoch(
    phi: &mut LayerStack,
    set: &SimulatedShiftSet,
    batch: usize,
    optim: &OptimHp,
) -> Result<f64> {
    if batch == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if set.is_empty() {
        return Err(Error::invalid("cannot fit on an empty shift set"));
    }
    let n = set.inputs.rows();
    let mut loss_sum = 0.0;
    let mut chunks = 0;
    let mut at = 0;
    while at < n {
        let end = (at + batch).min(n);
        let idx: Vec<usize> = (at..end).collect();
        let inputs = set.inputs.take_rows(&idx)?;
        let targets = set.targets.take_rows(&idx)?;
        phi.zero_grads();
        let preds = phi.forward(&inputs)?;
        let (loss, grad) = mean_sq_l2(&preds, &targets)?;
        phi.backward(&grad)?;
        adamw_step(phi.param_blocks_mut(), optim);
        loss_sum += loss;
        chunks += 1;
        at = end;
    }
    Ok(loss_sum / chunks as f64)
}

/// Fit a shift estimator for a fixed number of epochs; returns the mean
/// loss trace, one value per epoch.
pub fn fit_shift_estimator(
    phi: &mut LayerStack,
    set: &SimulatedShiftSet,
    epochs: usize,
    batch: usize,
    optim: &OptimHp,
) -> Result<Vec<f64>> {
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        trace.push(shift_epoch(phi, set, batch, optim)?);
    }
    Ok(trace)
}

fn sgn(c: f64) -> f64 {
    if c > 0.0 {
        1.0
    } else if c < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Absolute-cosine matrix entries and row norms for a basis.
fn cosine_parts(basis: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let t = basis.rows();
    let norms: Vec<f64> = (0..t)
        .map(|p| {
            basis
                .row(p)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(1e-12)
        })
        .collect();
    let mut cos = vec![0.0; t * t];
    for p in 0..t {
        for q in 0..t {
            if p == q {
                continue;
            }
            let dot: f64 = basis
                .row(p)
                .iter()
                .zip(basis.row(q))
                .map(|(a, b)| a * b)
                .sum();
            cos[p * t + q] = dot / (norms[p] * norms[q]);
        }
    }
    (cos, norms)
}

/// Orthogonality penalty value for a basis. `target` is the intended row
/// count (in practice the basis's own row count `t`).
pub fn orthogonality_loss_value(basis: &Matrix, target: usize) -> Result<f64> {
    if basis.rows() == 0 || basis.cols() == 0 {
        return Err(Error::invalid("orthogonality needs a nonempty basis"));
    }
    let t = basis.rows();
    let (cos, _) = cosine_parts(basis);
    let mut s1 = t as f64; // diagonal contributes 1 per row
    let mut s2 = t as f64;
    for p in 0..t {
        for q in 0..t {
            if p != q {
                let a = cos[p * t + q].abs();
                s1 += a;
                s2 += a * a;
            }
        }
    }
    Ok(s1 / s2 + (s1 - target as f64) * (s1 - target as f64))
}

/// Compute the penalty and accumulate `weight` times its gradient into the
/// basis's gradient buffer. Returns the (unweighted) penalty value.
pub fn orthogonality_backward(le: &mut LESpace, target: usize, weight: f64) -> Result<f64> {
    let t = le.t();
    let d = le.dim();
    let basis = le.basis.value.clone();
    let (cos, norms) = cosine_parts(&basis);

    let mut s1 = t as f64;
    let mut s2 = t as f64;
    for p in 0..t {
        for q in 0..t {
            if p != q {
                let a = cos[p * t + q].abs();
                s1 += a;
                s2 += a * a;
            }
        }
    }
    let loss = s1 / s2 + (s1 - target as f64) * (s1 - target as f64);

    // dL/dA_pq for an off-diagonal entry: the diagonal is constant.
    let dl_ds1 = 1.0 / s2 + 2.0 * (s1 - target as f64);
    let dl_ds2 = -s1 / (s2 * s2);
    let mut grad = Matrix::zeros(t, d);
    for p in 0..t {
        for q in 0..t {
            if p == q {
                continue;
            }
            let c = cos[p * t + q];
            let a = c.abs();
            let dl_da = dl_ds1 + dl_ds2 * 2.0 * a;
            let g = weight * dl_da * sgn(c);
            if g == 0.0 {
                continue;
            }
            // c = <b_p, b_q> / (|b_p| |b_q|):
            // dc/db_p = b_q / (|b_p||b_q|) - c * b_p / |b_p|^2
            let np = norms[p];
            let nq = norms[q];
            for j in 0..d {
                let bp = basis.get(p, j);
                let bq = basis.get(q, j);
                let dp = bq / (np * nq) - c * bp / (np * np);
                let dq = bp / (np * nq) - c * bq / (nq * nq);
                grad.set(p, j, grad.get(p, j) + g * dp);
                grad.set(q, j, grad.get(q, j) + g * dq);
            }
        }
    }
    le.basis.grad.axpy(1.0, &grad)?;
    Ok(loss)
}

//! Loss functions. Each returns `(value, gradient w.r.t. the prediction)` in
//! one call so callers cannot pair a value with the wrong gradient.
//!
//! All losses average over the batch (rows), never over the feature
//! dimension: a squared-error loss on `N x D` matrices is the mean over the
//! `N` rows of the squared L2 row distance.

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in out.row_mut(r) {
            *o /= sum;
        }
    }
    out
}

/// Mean over rows of the squared L2 distance between prediction and target.
/// Gradient: `2 (pred - target) / n_rows`.
pub fn mean_sq_l2(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if !pred.same_shape(target) {
        return Err(Error::shape(
            "mean_sq_l2",
            format!(
                "{}x{} vs {}x{}",
                pred.rows(),
                pred.cols(),
                target.rows(),
                target.cols()
            ),
        ));
    }
    if pred.rows() == 0 {
        return Err(Error::invalid("mean_sq_l2 needs at least one row"));
    }
    let n = pred.rows() as f64;
    let mut grad = pred.sub(target)?;
    let value = grad.frobenius_norm_sq() / n;
    grad.scale(2.0 / n);
    Ok((value, grad))
}

/// Mean squared error for single-output regression (`N x 1` matrices).
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.cols() != 1 || target.cols() != 1 {
        return Err(Error::shape(
            "mse",
            format!(
                "expects Nx1 matrices, got {}x{} and {}x{}",
                pred.rows(),
                pred.cols(),
                target.rows(),
                target.cols()
            ),
        ));
    }
    mean_sq_l2(pred, target)
}

/// Softmax cross-entropy from raw logits, stabilised through log-sum-exp.
/// Gradient: `(softmax(logits) - onehot(labels)) / n_rows`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} logit rows vs {} labels", logits.rows(), labels.len()),
        ));
    }
    if logits.rows() == 0 {
        return Err(Error::invalid("cross_entropy needs at least one row"));
    }
    let classes = logits.cols();
    let n = logits.rows() as f64;
    let mut grad = softmax_rows(logits);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::invalid(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
        let g = grad.row_mut(r);
        g[label] -= 1.0;
    }
    grad.scale(1.0 / n);
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn mse_known_value_and_gradient() {
        let pred = m(2, 1, &[0.0, 2.0]);
        let target = m(2, 1, &[0.0, 0.0]);
        let (v, g) = mse(&pred, &target).unwrap();
        assert_eq!(v, 2.0); // (0 + 4) / 2
        assert_eq!(g, m(2, 1, &[0.0, 2.0])); // 2 * diff / N
    }

    #[test]
    fn mse_rejects_multi_column_input() {
        let a = m(1, 2, &[0.0, 0.0]);
        assert!(mse(&a, &a).is_err());
    }

    #[test]
    fn mean_sq_l2_averages_over_rows_only() {
        // Two rows, three columns; row distances^2 are 3 and 12.
        let pred = m(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let target = m(2, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (v, g) = mean_sq_l2(&pred, &target).unwrap();
        assert_eq!(v, 7.5); // (3 + 12) / 2, no division by D=3
        assert_eq!(g.get(0, 0), 1.0); // 2 * 1 / 2
        assert_eq!(g.get(1, 0), 2.0);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        // Identical zero logits: loss is ln(C) exactly.
        let logits = m(1, 4, &[0.0; 4]);
        let (v, _) = cross_entropy(&logits, &[2]).unwrap();
        assert!((v - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_two_row_gradient() {
        // Two identical rows of (0, 0) with label 0: softmax is (1/2, 1/2),
        // so each row's gradient is (0.5 - 1, 0.5) / 2 = (-0.25, 0.25).
        let logits = m(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let (v, g) = cross_entropy(&logits, &[0, 0]).unwrap();
        assert!((v - 2.0_f64.ln()).abs() < 1e-12);
        assert!(g.max_abs_diff(&m(2, 2, &[-0.25, 0.25, -0.25, 0.25])) < 1e-12);
    }

    #[test]
    fn cross_entropy_is_stable_at_large_margins() {
        // Confidently correct with a margin of 20: loss = ln(1 + e^-20).
        let logits = m(1, 2, &[20.0, 0.0]);
        let (v, _) = cross_entropy(&logits, &[0]).unwrap();
        assert!(v > 0.0 && v < 1e-8, "loss {v}");

        // Extremely large logits must not overflow to NaN.
        let logits = m(1, 2, &[800.0, -800.0]);
        let (v, g) = cross_entropy(&logits, &[0]).unwrap();
        assert!(v.is_finite());
        assert!(g.check_finite("test").is_ok());
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = m(1, 3, &[0.0, 0.0, 0.0]);
        assert!(cross_entropy(&logits, &[3]).is_err());
        assert!(cross_entropy(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn softmax_rows_form_a_probability_simplex() {
        let x = m(
            3,
            4,
            &[
                1.0, 2.0, 3.0, 4.0, -50.0, 0.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        let y = softmax_rows(&x);
        for r in 0..y.rows() {
            let row = y.row(r);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Uniform logits give the uniform distribution.
        assert!((y.get(2, 0) - 0.25).abs() < 1e-12);
    }
}

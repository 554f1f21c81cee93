//! Singular values via one-sided Jacobi (Hestenes) orthogonalization.
//!
//! Plane rotations act on column pairs of `Z` until every pair is orthogonal
//! to working precision; the singular values are then the column norms.
//! Working on `Z` directly — never on the Gram matrix `Z^T Z` — keeps small
//! singular values accurate: the Gram route floors them at `‖Z‖·√ε`, which
//! would smear an exactly rank-deficient spectrum into ~1e-7 noise. The sweep
//! order is fixed and free of data-dependent pivoting, so results are
//! deterministic across platforms.

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

const MAX_SWEEPS: usize = 100;
/// Column pairs whose cosine is at or below this count as orthogonal.
const COS_TOL: f64 = 1e-14;

/// Singular values of `z`, descending, length `min(rows, cols)`.
pub fn singular_values(z: &Matrix) -> Result<Vec<f64>> {
    if z.rows() == 0 || z.cols() == 0 {
        return Err(Error::invalid("singular_values needs a non-empty matrix"));
    }
    z.check_finite("singular_values input")?;
    // Work on whichever orientation has fewer columns: the spectrum is
    // shared, and rotations then sweep min(rows, cols)² / 2 pairs.
    let (n, d) = (z.rows(), z.cols());
    let mut cols: Vec<Vec<f64>> = if d <= n {
        (0..d)
            .map(|j| (0..n).map(|i| z.get(i, j)).collect())
            .collect()
    } else {
        (0..n).map(|i| z.row(i).to_vec()).collect()
    };

    // A column whose norm falls to rounding noise relative to the whole
    // matrix is numerically zero. Freeze it: its direction is arbitrary, so
    // its cosine against live columns never settles and would otherwise keep
    // sweeps churning.
    let len = cols[0].len();
    let noise_floor = 4.0 * f64::EPSILON * (len as f64).sqrt() * z.frobenius_norm_sq().sqrt();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols.len() {
            for q in p + 1..cols.len() {
                if rotate_pair(&mut cols, p, q, noise_floor) {
                    rotated = true;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
            sv.sort_by(|a, b| b.partial_cmp(a).expect("finite norms"));
            return Ok(sv);
        }
    }
    Err(Error::Numerical(format!(
        "jacobi orthogonalization did not converge in {MAX_SWEEPS} sweeps"
    )))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rotate columns `p` and `q` to mutual orthogonality. Returns `false` when
/// the pair already is orthogonal to tolerance, or either column sits at the
/// noise floor.
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, noise_floor: f64) -> bool {
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (x, y) in cols[p].iter().zip(&cols[q]) {
        alpha += x * x;
        beta += y * y;
        gamma += x * y;
    }
    let norms = alpha.sqrt() * beta.sqrt();
    if alpha.sqrt() <= noise_floor || beta.sqrt() <= noise_floor || gamma.abs() <= COS_TOL * norms {
        return false;
    }
    let zeta = (beta - alpha) / (2.0 * gamma);
    // Smaller-angle root of t² + 2·ζ·t − 1 = 0.
    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = c * t;
    let (head, tail) = cols.split_at_mut(q);
    for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (old_x, old_y) = (*x, *y);
        *x = c * old_x - s * old_y;
        *y = s * old_x + c * old_y;
    }
    true
}

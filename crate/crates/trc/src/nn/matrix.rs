//! Dense row-major `f64` matrices with exactly the operations the rest of the
//! crate needs. Shape mismatches are reported as [`Error::Shape`] rather than
//! panics so model-level code can surface them with context.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!(
                    "{rows}x{cols} needs {} values, got {}",
                    rows * cols,
                    data.len()
                ),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(
                    "from_rows",
                    format!("row {i} has {} values, expected {cols}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when the stored buffer length matches the declared shape; used to
    /// validate matrices that arrive from deserialization.
    pub fn is_consistent(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn require_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(())
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` without materialising the transpose. The workhorse of
    /// weight gradients (`dW = X^T dY`).
    pub fn matmul_at_b(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::shape(
                "matmul_at_b",
                format!("{}x{}^T * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = rhs.row(i);
            for (r, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T` without materialising the transpose. The workhorse of
    /// input gradients (`dX = dY W^T`).
    pub fn matmul_a_bt(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::shape(
                "matmul_a_bt",
                format!("{}x{} * {}x{}^T", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..rhs.rows {
                let b_row = rhs.row(j);
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.require_same_shape(other, "add")?;
        let mut out = self.clone();
        for (o, &v) in out.data.iter_mut().zip(&other.data) {
            *o += v;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.require_same_shape(other, "sub")?;
        let mut out = self.clone();
        for (o, &v) in out.data.iter_mut().zip(&other.data) {
            *o -= v;
        }
        Ok(out)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.require_same_shape(other, "axpy")?;
        for (o, &v) in self.data.iter_mut().zip(&other.data) {
            *o += alpha * v;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Largest absolute element-wise difference; handy in tests.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Gather the given rows into a new matrix.
    pub fn take_rows(&self, idx: &[usize]) -> Result<Matrix> {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (i, &r) in idx.iter().enumerate() {
            if r >= self.rows {
                return Err(Error::invalid(format!(
                    "take_rows index {r} out of range for {} rows",
                    self.rows
                )));
            }
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        Ok(out)
    }

    /// Stack matrices vertically. All inputs must agree on column count.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut at = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::shape(
                    "vstack",
                    format!("expected {cols} columns, found {}", m.cols),
                ));
            }
            out.data[at..at + m.data.len()].copy_from_slice(&m.data);
            at += m.data.len();
        }
        Ok(out)
    }

    /// Error out if any entry is NaN or infinite, naming the operation that
    /// produced the matrix.
    pub fn check_finite(&self, producer: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(producer.to_string()))
        }
    }
}

/// Per-row mean of a matrix's columns, as a 1 x cols matrix.
pub fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        for (o, &v) in out.row_mut(0).iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

//! A trainable tensor: value, accumulated gradient, and Adam moment buffers.

use rand::Rng;

use crate::nn::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct ParamBlock {
    pub value: Matrix,
    pub grad: Matrix,
    pub(crate) m: Matrix,
    pub(crate) v: Matrix,
    pub(crate) step: u64,
}

impl ParamBlock {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        let m = grad.clone();
        let v = grad.clone();
        ParamBlock {
            value,
            grad,
            m,
            v,
            step: 0,
        }
    }

    /// Uniform init on (-bound, +bound), drawn row-major so the stream of
    /// random values is independent of any internal storage choice.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let mut value = Matrix::zeros(rows, cols);
        for v in value.data_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        ParamBlock::new(value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Replace the value tensor, preserving optimizer state shape invariants.
    /// Used by checkpoint restore and best-epoch snapshots.
    pub fn set_value(&mut self, value: Matrix) -> crate::error::Result<()> {
        if !self.value.same_shape(&value) {
            return Err(crate::error::Error::shape(
                "set_value",
                format!(
                    "{}x{} vs {}x{}",
                    self.value.rows(),
                    self.value.cols(),
                    value.rows(),
                    value.cols()
                ),
            ));
        }
        self.value = value;
        Ok(())
    }
}

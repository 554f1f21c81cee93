//! Layers and layer stacks with reverse-mode gradients.
//!
//! A [`LayerStack`] owns its layers and, after a training-mode [`forward`],
//! the full chain of activations (`cache[i]` is the input to layer `i`,
//! `cache[n]` the final output). [`backward`] walks the chain in reverse and
//! *accumulates* into each parameter's `.grad`, so multi-term losses can sum
//! their gradients by running several backward passes before one optimizer
//! step. Inference goes through [`eval`], which touches no state at all.
//!
//! [`forward`]: LayerStack::forward
//! [`backward`]: LayerStack::backward
//! [`eval`]: LayerStack::eval

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::loss::softmax_rows;
use crate::nn::matrix::{column_sums, Matrix};
use crate::nn::param::ParamBlock;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamBlock,
    pub b: ParamBlock,
}

impl Linear {
    /// Uniform init on (-1/sqrt(fan_in), +1/sqrt(fan_in)) for both weights
    /// and bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Linear {
            w: ParamBlock::uniform(fan_in, fan_out, bound, rng),
            b: ParamBlock::uniform(1, fan_out, bound, rng),
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.w.value)?;
        let bias = self.b.value.row(0);
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    fn backward(&mut self, input: &Matrix, grad: &Matrix) -> Result<Matrix> {
        self.w.grad.axpy(1.0, &input.matmul_at_b(grad)?)?;
        self.b.grad.axpy(1.0, &column_sums(grad))?;
        grad.matmul_a_bt(&self.w.value)
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    /// Boxed so parameter-free variants don't carry a full affine block.
    Linear(Box<Linear>),
    Relu,
    /// Row-wise softmax; meaningful as the final layer of a stack.
    Softmax,
    /// Identity skip around an inner stack: `y = x + inner(x)`.
    Residual(LayerStack),
}

impl Layer {
    pub fn linear<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Layer::Linear(Box::new(Linear::new(fan_in, fan_out, rng)))
    }

    fn name(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::Relu => "relu",
            Layer::Softmax => "softmax",
            Layer::Residual(_) => "residual",
        }
    }

    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
            Layer::Softmax => Ok(softmax_rows(x)),
            Layer::Residual(inner) => {
                let y = inner.forward(x)?;
                if !y.same_shape(x) {
                    return Err(Error::shape(
                        "residual",
                        format!(
                            "skip needs matching shapes, got {}x{} vs {}x{}",
                            x.rows(),
                            x.cols(),
                            y.rows(),
                            y.cols()
                        ),
                    ));
                }
                y.add(x)
            }
        }
    }

    fn eval(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
            Layer::Softmax => Ok(softmax_rows(x)),
            Layer::Residual(inner) => {
                let y = inner.eval(x)?;
                if !y.same_shape(x) {
                    return Err(Error::shape(
                        "residual",
                        format!(
                            "skip needs matching shapes, got {}x{} vs {}x{}",
                            x.rows(),
                            x.cols(),
                            y.rows(),
                            y.cols()
                        ),
                    ));
                }
                y.add(x)
            }
        }
    }

    fn backward(&mut self, input: &Matrix, output: &Matrix, grad: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.backward(input, grad),
            Layer::Relu => {
                let mut g = grad.clone();
                for (g, &x) in g.data_mut().iter_mut().zip(input.data()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok(g)
            }
            Layer::Softmax => {
                // dx_i = y_i * (g_i - sum_j g_j y_j), row-wise.
                let mut dx = Matrix::zeros(grad.rows(), grad.cols());
                for r in 0..grad.rows() {
                    let y = output.row(r);
                    let g = grad.row(r);
                    let dot: f64 = y.iter().zip(g).map(|(&y, &g)| y * g).sum();
                    for (d, (&y, &g)) in dx.row_mut(r).iter_mut().zip(y.iter().zip(g)) {
                        *d = y * (g - dot);
                    }
                }
                Ok(dx)
            }
            Layer::Residual(inner) => {
                let through = inner.backward(grad)?;
                grad.add(&through)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerStack {
    layers: Vec<Layer>,
    cache: Option<Vec<Matrix>>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Self {
        LayerStack {
            layers,
            cache: None,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Training-mode forward: runs the chain and retains every intermediate
    /// activation for a later [`backward`](Self::backward).
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let out = layer.forward(acts.last().expect("non-empty"))?;
            out.check_finite(&format!("layer {i} ({})", layer.name()))?;
            acts.push(out);
        }
        let out = acts.last().expect("non-empty").clone();
        self.cache = Some(acts);
        Ok(out)
    }

    /// Pure inference forward: no caches are read or written.
    pub fn eval(&self, x: &Matrix) -> Result<Matrix> {
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.eval(&cur)?;
            cur.check_finite(&format!("layer {i} ({})", layer.name()))?;
        }
        Ok(cur)
    }

    /// Reverse-mode pass. Accumulates parameter gradients and returns the
    /// gradient with respect to the stack input. The activation cache is kept
    /// alive, so calling backward twice adds the same gradients twice.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::ModelState("backward called before forward".into()))?;
        let out = cache.last().expect("cache holds input and output");
        if !out.same_shape(grad_out) {
            return Err(Error::shape(
                "backward",
                format!(
                    "gradient is {}x{} but cached output is {}x{}",
                    grad_out.rows(),
                    grad_out.cols(),
                    out.rows(),
                    out.cols()
                ),
            ));
        }
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            g = self.layers[i].backward(&cache[i], &cache[i + 1], &g)?;
        }
        Ok(g)
    }

    pub fn zero_grads(&mut self) {
        for b in self.param_blocks_mut() {
            b.zero_grad();
        }
    }

    /// All parameter blocks in a fixed depth-first order. The same order is
    /// used by [`param_values`](Self::param_values) and
    /// [`restore_param_values`](Self::restore_param_values), which is what
    /// makes snapshots and checkpoints well-defined.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(&mut l.w);
                    out.push(&mut l.b);
                }
                Layer::Residual(inner) => out.extend(inner.param_blocks_mut()),
                Layer::Relu | Layer::Softmax => {}
            }
        }
        out
    }

    pub fn param_values(&self) -> Vec<Matrix> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(l.w.value.clone());
                    out.push(l.b.value.clone());
                }
                Layer::Residual(inner) => out.extend(inner.param_values()),
                Layer::Relu | Layer::Softmax => {}
            }
        }
        out
    }

    pub fn restore_param_values(&mut self, values: &[Matrix]) -> Result<()> {
        let mut blocks = self.param_blocks_mut();
        if blocks.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "stack has {} parameter tensors, snapshot has {}",
                blocks.len(),
                values.len()
            )));
        }
        for (block, value) in blocks.iter_mut().zip(values) {
            block.set_value(value.clone()).map_err(|_| {
                Error::Checkpoint(format!(
                    "parameter tensor shape mismatch: expected {}x{}, snapshot has {}x{}",
                    block.value.rows(),
                    block.value.cols(),
                    value.rows(),
                    value.cols()
                ))
            })?;
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.param_values().iter().map(Matrix::len).sum()
    }
}

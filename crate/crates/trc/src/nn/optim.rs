//! AdamW: Adam with decoupled weight decay.
//!
//! Decay is applied to the parameter *before* the Adam update and is not
//! folded into the gradient, so it is unaffected by the moment estimates.
//! Each [`ParamBlock`] carries its own moment buffers and step counter, which
//! means training phases that touch different subsets of parameters keep
//! their optimizer state consistent per block.

use serde::{Deserialize, Serialize};

use crate::nn::param::ParamBlock;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimHp {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimHp {
    fn default() -> Self {
        OptimHp {
            lr: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimHp {
    pub fn with_lr_wd(lr: f64, weight_decay: f64) -> Self {
        OptimHp {
            lr,
            weight_decay,
            ..OptimHp::default()
        }
    }
}

/// Apply one AdamW step to every block, consuming (and then clearing) the
/// accumulated gradients.
pub fn adamw_step<'a>(blocks: impl IntoIterator<Item = &'a mut ParamBlock>, hp: &OptimHp) {
    for block in blocks {
        block.step += 1;
        let t = block.step as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);
        let n = block.value.len();
        for i in 0..n {
            let g = block.grad.data()[i];
            let theta = block.value.data()[i];
            // Decoupled decay first, then the Adam update proper.
            let decayed = theta - hp.lr * hp.weight_decay * theta;
            let m = hp.beta1 * block.m.data()[i] + (1.0 - hp.beta1) * g;
            let v = hp.beta2 * block.v.data()[i] + (1.0 - hp.beta2) * g * g;
            block.m.data_mut()[i] = m;
            block.v.data_mut()[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            block.value.data_mut()[i] = decayed - hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
        block.zero_grad();
    }
}

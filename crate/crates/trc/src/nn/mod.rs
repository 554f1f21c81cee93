//! A minimal deterministic neural-network kernel.
//!
//! Everything is dense row-major `f64`. There is no SIMD, no threading and no
//! BLAS binding on purpose: the models in this crate are small (hundreds to a
//! few thousand parameters), and bit-identical results across runs and
//! machines are worth far more here than raw throughput.
//!
//! The pieces compose in the obvious way: [`Matrix`] is storage and algebra,
//! [`ParamBlock`] couples a tensor with its gradient and optimizer state,
//! [`LayerStack`] chains layers with cached activations for reverse-mode
//! gradients, [`optim`] applies decoupled-weight-decay Adam steps, and
//! [`spectral`] extracts singular values for the diagnostics built on top.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod param;
pub mod spectral;

pub use gradcheck::{check_gradients, GradCheck, Parameterized};
pub use layers::{Layer, LayerStack, Linear};
pub use loss::{cross_entropy, mean_sq_l2, mse, softmax_rows};
pub use matrix::Matrix;
pub use optim::{adamw_step, OptimHp};
pub use param::ParamBlock;
pub use spectral::singular_values;

//! Backbone networks for tabular data.
//!
//! A backbone is encoder + body + head. The encoder passes numerical columns
//! through unchanged and replaces each categorical code with a learned
//! embedding row. The body is a stack of `depth` blocks of
//! `Linear(width) + ReLU` (with identity skip connections around every
//! shape-preserving block for the residual variant); its output is the
//! *representation* that the rest of the crate diagnoses and corrects. The
//! head is a single linear layer producing one regression output or one
//! logit per class.
//!
//! Freezing is a contract on parameter *values*: a frozen backbone still
//! computes forward passes and gradients (per-sample gradient diagnostics
//! need them) but refuses optimizer steps and training.

pub mod checkpoint;
pub mod train;

pub use checkpoint::{load_backbone, save_backbone};
pub use train::{evaluate, train_backbone, validation_metric, EpochLog, TrainHp, TrainLog};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::dataset::TaskKind;
use crate::data::schema::{ColumnKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::nn::gradcheck::Parameterized;
use crate::nn::layers::{Layer, LayerStack};
use crate::nn::matrix::Matrix;
use crate::nn::optim::{adamw_step, OptimHp};
use crate::nn::param::ParamBlock;
use crate::rng::{rng_from, Fnv1a64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Mlp,
    ResidualMlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub architecture: Architecture,
    /// Number of body blocks.
    pub depth: usize,
    /// Body width; equals the representation dimension.
    pub width: usize,
    /// Embedding width for categorical columns.
    pub embed_dim: usize,
    pub seed: u64,
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invalid("backbone depth must be at least 1"));
        }
        if self.width == 0 {
            return Err(Error::invalid("backbone width must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embedding width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    schema: FeatureSchema,
    task: TaskKind,
    /// One embedding table per categorical column, `None` for numerical.
    embeddings: Vec<Option<ParamBlock>>,
    body: LayerStack,
    head: LayerStack,
    frozen: bool,
    /// Raw input rows of the last training-mode forward, for routing
    /// gradients back into embedding tables.
    enc_cache: Option<Matrix>,
}

impl Backbone {
    /// Build a fresh backbone. All parameters are drawn from a single ChaCha
    /// stream seeded by `config.seed`, in a fixed order (embeddings by
    /// column, body blocks, head), so construction is reproducible.
    pub fn new(config: &BackboneConfig, schema: &FeatureSchema, task: TaskKind) -> Result<Self> {
        config.validate()?;
        if let Some(c) = task.n_classes() {
            if c < 2 {
                return Err(Error::invalid("classification needs at least 2 classes"));
            }
        }
        let mut rng = rng_from(config.seed);

        let mut embeddings = Vec::with_capacity(schema.n_columns());
        let mut enc_width = 0;
        for col in schema.columns() {
            match col.kind {
                ColumnKind::Numerical => {
                    embeddings.push(None);
                    enc_width += 1;
                }
                ColumnKind::Categorical { cardinality } => {
                    // An embedding table is a linear map from the one-hot
                    // code, so fan-in is the cardinality.
                    let bound = 1.0 / (cardinality as f64).sqrt();
                    embeddings.push(Some(ParamBlock::uniform(
                        cardinality,
                        config.embed_dim,
                        bound,
                        &mut rng,
                    )));
                    enc_width += config.embed_dim;
                }
            }
        }

        let mut body_layers = Vec::new();
        let mut in_dim = enc_width;
        for _ in 0..config.depth {
            let skip = config.architecture == Architecture::ResidualMlp && in_dim == config.width;
            if skip {
                let inner = LayerStack::new(vec![
                    Layer::linear(in_dim, config.width, &mut rng),
                    Layer::Relu,
                ]);
                body_layers.push(Layer::Residual(inner));
            } else {
                body_layers.push(Layer::linear(in_dim, config.width, &mut rng));
                body_layers.push(Layer::Relu);
            }
            in_dim = config.width;
        }
        let body = LayerStack::new(body_layers);
        let head = LayerStack::new(vec![Layer::linear(
            config.width,
            task.n_outputs(),
            &mut rng,
        )]);

        Ok(Backbone {
            config: *config,
            schema: schema.clone(),
            task,
            embeddings,
            body,
            head,
            frozen: false,
            enc_cache: None,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Representation dimension (body output width).
    pub fn repr_dim(&self) -> usize {
        self.config.width
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freeze parameter values. Forward passes and gradient computation stay
    /// available; optimizer steps and training become errors.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Encode raw (preprocessed) feature rows: numerical passthrough plus
    /// embedding lookups. Categorical cells must hold exact in-range codes.
    pub fn encode(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.cols() != self.schema.n_columns() {
            return Err(Error::shape(
                "encode",
                format!(
                    "{} input columns for a {}-column schema",
                    rows.cols(),
                    self.schema.n_columns()
                ),
            ));
        }
        let enc_width = self.encoded_width();
        let mut out = Matrix::zeros(rows.rows(), enc_width);
        for r in 0..rows.rows() {
            let mut at = 0;
            for (j, table) in self.embeddings.iter().enumerate() {
                let v = rows.get(r, j);
                match table {
                    None => {
                        out.set(r, at, v);
                        at += 1;
                    }
                    Some(table) => {
                        let code = self.checked_code(v, j)?;
                        let emb = table.value.row(code);
                        out.row_mut(r)[at..at + emb.len()].copy_from_slice(emb);
                        at += emb.len();
                    }
                }
            }
        }
        Ok(out)
    }

    fn checked_code(&self, v: f64, col: usize) -> Result<usize> {
        let table = self.embeddings[col].as_ref().expect("categorical column");
        if v.fract() != 0.0 || v < 0.0 || (v as usize) >= table.value.rows() {
            return Err(Error::invalid(format!(
                "column '{}': {v} is not a valid code (cardinality {})",
                self.schema.column(col).name,
                table.value.rows()
            )));
        }
        Ok(v as usize)
    }

    pub fn encoded_width(&self) -> usize {
        self.schema
            .columns()
            .iter()
            .map(|c| {
                if c.kind.is_categorical() {
                    self.config.embed_dim
                } else {
                    1
                }
            })
            .sum()
    }

    /// Training-mode representation forward: caches activations (and the raw
    /// rows, for embedding gradients).
    pub fn forward_repr(&mut self, rows: &Matrix) -> Result<Matrix> {
        let enc = self.encode(rows)?;
        self.enc_cache = Some(rows.clone());
        self.body.forward(&enc)
    }

    /// Pure representation extraction: no caches touched, usable on a shared
    /// frozen backbone.
    pub fn repr_eval(&self, rows: &Matrix) -> Result<Matrix> {
        self.body.eval(&self.encode(rows)?)
    }

    /// Training-mode full forward (representation then head).
    pub fn forward_predictions(&mut self, rows: &Matrix) -> Result<Matrix> {
        let z = self.forward_repr(rows)?;
        self.head.forward(&z)
    }

    /// Pure full forward.
    pub fn predict_eval(&self, rows: &Matrix) -> Result<Matrix> {
        self.head.eval(&self.repr_eval(rows)?)
    }

    /// Reverse pass from prediction gradients down to (and including) the
    /// embedding tables. Requires a previous training-mode forward.
    pub fn backward(&mut self, grad_preds: &Matrix) -> Result<()> {
        let grad_repr = self.head.backward(grad_preds)?;
        self.backward_repr(&grad_repr)
    }

    /// Reverse pass from representation gradients (used when a loss is
    /// attached directly to the representation).
    pub fn backward_repr(&mut self, grad_repr: &Matrix) -> Result<()> {
        let grad_enc = self.body.backward(grad_repr)?;
        let rows = self
            .enc_cache
            .clone()
            .ok_or_else(|| Error::ModelState("backward called before forward".into()))?;
        if rows.rows() != grad_enc.rows() {
            return Err(Error::shape(
                "backbone backward",
                format!(
                    "gradient batch {} vs cached batch {}",
                    grad_enc.rows(),
                    rows.rows()
                ),
            ));
        }
        // Route encoder gradients into embedding tables; numerical slots are
        // inputs, not parameters, so their gradient is dropped.
        for r in 0..rows.rows() {
            let mut at = 0;
            for (j, table) in self.embeddings.iter_mut().enumerate() {
                match table {
                    None => at += 1,
                    Some(table) => {
                        let code = rows.get(r, j) as usize;
                        let width = table.value.cols();
                        let g = &grad_enc.row(r)[at..at + width];
                        for (dst, &src) in table.grad.row_mut(code).iter_mut().zip(g) {
                            *dst += src;
                        }
                        at += width;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for b in self.all_param_blocks_mut() {
            b.zero_grad();
        }
    }

    /// One AdamW step over every parameter. Refused on a frozen backbone —
    /// freezing is precisely the promise that values stop changing.
    pub fn optimizer_step(&mut self, hp: &OptimHp) -> Result<()> {
        if self.frozen {
            return Err(Error::ModelState(
                "optimizer step on a frozen backbone".into(),
            ));
        }
        adamw_step(self.all_param_blocks_mut(), hp);
        Ok(())
    }

    fn all_param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out: Vec<&mut ParamBlock> = self.embeddings.iter_mut().flatten().collect();
        out.extend(self.body.param_blocks_mut());
        out.extend(self.head.param_blocks_mut());
        out
    }

    /// Feature-extractor parameters only (embeddings + body), excluding the
    /// head. This is the set whose gradients define per-sample gradient
    /// norms.
    pub fn feature_param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out: Vec<&mut ParamBlock> = self.embeddings.iter_mut().flatten().collect();
        out.extend(self.body.param_blocks_mut());
        out
    }

    /// Every parameter tensor in fixed order (embeddings, body, head).
    pub fn param_values(&self) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = self
            .embeddings
            .iter()
            .flatten()
            .map(|b| b.value.clone())
            .collect();
        out.extend(self.body.param_values());
        out.extend(self.head.param_values());
        out
    }

    pub fn restore_param_values(&mut self, values: &[Matrix]) -> Result<()> {
        let mut blocks = self.all_param_blocks_mut();
        if blocks.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "backbone has {} parameter tensors, snapshot has {}",
                blocks.len(),
                values.len()
            )));
        }
        for (block, value) in blocks.iter_mut().zip(values) {
            block
                .set_value(value.clone())
                .map_err(|_| Error::Checkpoint("parameter tensor shape mismatch".into()))?;
        }
        Ok(())
    }

    /// Byte-level FNV checksum over every parameter value (shape and data),
    /// the verifiable form of the freeze contract.
    pub fn param_checksum(&self) -> u64 {
        let mut h = Fnv1a64::new();
        for m in self.param_values() {
            h.update(&(m.rows() as u64).to_le_bytes());
            h.update(&(m.cols() as u64).to_le_bytes());
            for &v in m.data() {
                h.update_f64(v);
            }
        }
        h.finish()
    }
}

impl Parameterized for Backbone {
    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.all_param_blocks_mut()
    }
}

/// Convenience used across tests and the harness: fresh seeded RNG views of
/// a dataset batch are not needed — batches are row index slices.
pub fn batch_indices(n: usize, batch: usize, order: &[usize]) -> Vec<Vec<usize>> {
    assert!(batch > 0);
    let mut out = Vec::with_capacity(n.div_ceil(batch));
    let mut at = 0;
    while at < n {
        let end = (at + batch).min(n);
        out.push(order[at..end].to_vec());
        at = end;
    }
    out
}

/// Shuffled index order for one epoch.
pub fn epoch_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

//! Supervised backbone training with early stopping.
//!
//! One epoch is a full shuffled pass in minibatches; after each epoch the
//! validation metric (RMSE in normalized label units for regression,
//! accuracy for classification) decides early stopping. Patience counts
//! consecutive epochs without strict improvement; on stop the best-epoch
//! parameters are restored.

use serde::{Deserialize, Serialize};

use crate::backbone::{batch_indices, epoch_order, Backbone};
use crate::data::dataset::{Dataset, TaskKind};
use crate::data::preprocess::Preprocessor;
use crate::data::split::Split;
use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, mse, softmax_rows};
use crate::nn::matrix::Matrix;
use crate::nn::optim::OptimHp;
use crate::rng::{derive_seed, rng_from};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainHp {
    pub optim: OptimHp,
    pub batch: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    /// Restore the best-validation parameters after training.
    pub restore_best: bool,
}

impl Default for TrainHp {
    fn default() -> Self {
        TrainHp {
            optim: OptimHp::default(),
            batch: 128,
            patience: 10,
            max_epochs: 200,
            restore_best: true,
        }
    }
}

impl TrainHp {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub early_stopped: bool,
}

/// Whether `candidate` strictly improves on `best` for this task
/// (lower loss/RMSE for regression, higher accuracy for classification).
pub(crate) fn improves(task: TaskKind, candidate: f64, best: f64) -> bool {
    if task.is_classification() {
        candidate > best
    } else {
        candidate < best
    }
}

pub(crate) fn worst_metric(task: TaskKind) -> f64 {
    if task.is_classification() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    }
}

/// Mean training loss and gradient for one batch, pushed through the model.
fn batch_step(bb: &mut Backbone, batch: &Dataset) -> Result<f64> {
    let preds = bb.forward_predictions(batch.values())?;
    let (loss, grad) = match batch.task() {
        TaskKind::Regression => mse(&preds, &batch.labels_matrix())?,
        _ => cross_entropy(&preds, &batch.class_labels()?)?,
    };
    bb.backward(&grad)?;
    Ok(loss)
}

/// Validation metric in *normalized* label units: RMSE for regression (the
/// label z-scoring is monotone, so early-stopping order is unchanged),
/// accuracy for classification.
pub fn validation_metric(bb: &Backbone, val: &Dataset) -> Result<f64> {
    let preds = bb.predict_eval(val.values())?;
    preds_metric(&preds, val)
}

/// The same metric computed from an already-available prediction matrix.
pub(crate) fn preds_metric(preds: &Matrix, ds: &Dataset) -> Result<f64> {
    match ds.task() {
        TaskKind::Regression => {
            let (loss, _) = mse(preds, &ds.labels_matrix())?;
            Ok(loss.sqrt())
        }
        _ => accuracy(preds, &ds.class_labels()?),
    }
}

fn accuracy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() || logits.rows() == 0 {
        return Err(Error::shape(
            "accuracy",
            format!("{} prediction rows, {} labels", logits.rows(), labels.len()),
        ));
    }
    let hits = logits
        .rows_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Train a backbone on the split's train part, early-stopping on val.
pub fn train_backbone(bb: &mut Backbone, split: &Split, hp: &TrainHp) -> Result<TrainLog> {
    hp.validate()?;
    if bb.is_frozen() {
        return Err(Error::ModelState("cannot train a frozen backbone".into()));
    }
    if split.train.task() != bb.task() {
        return Err(Error::invalid(format!(
            "backbone task {:?} does not match dataset task {:?}",
            bb.task(),
            split.train.task()
        )));
    }

    let mut shuffle_rng = rng_from(derive_seed(bb.config().seed, "backbone-shuffle"));
    let n = split.train.n_rows();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: None,
        early_stopped: false,
    };
    let mut best_metric = worst_metric(bb.task());
    let mut best_params: Option<Vec<Matrix>> = None;
    let mut stale = 0;

    for epoch in 0..hp.max_epochs {
        let order = epoch_order(n, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for idx in batch_indices(n, hp.batch, &order) {
            let batch = split.train.take_rows(&idx)?;
            bb.zero_grads();
            loss_sum += batch_step(bb, &batch)?;
            bb.optimizer_step(&hp.optim)?;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let val_metric = validation_metric(bb, &split.val)?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_metric,
        });

        if improves(bb.task(), val_metric, best_metric) {
            best_metric = val_metric;
            log.best_epoch = Some(epoch);
            if hp.restore_best {
                best_params = Some(bb.param_values());
            }
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience {
                log.early_stopped = true;
                break;
            }
        }
    }

    if let Some(params) = best_params {
        bb.restore_param_values(&params)?;
    }
    Ok(log)
}

/// Test-time metric in original label units: RMSE for regression (labels and
/// predictions pushed back through the fitted label transform), accuracy for
/// classification. `pre` carries the label transform; pass `None` when labels
/// were never normalized.
pub fn evaluate(
    preds: &Matrix,
    labels: &[f64],
    task: TaskKind,
    pre: Option<&Preprocessor>,
) -> Result<f64> {
    if preds.rows() != labels.len() || labels.is_empty() {
        return Err(Error::shape(
            "evaluate",
            format!("{} prediction rows, {} labels", preds.rows(), labels.len()),
        ));
    }
    match task {
        TaskKind::Regression => {
            if preds.cols() != 1 {
                return Err(Error::shape(
                    "evaluate",
                    format!("regression expects 1 output column, got {}", preds.cols()),
                ));
            }
            let raw_preds = match pre {
                Some(p) => p.denormalize_labels(preds),
                None => preds.clone(),
            };
            let raw_labels: Vec<f64> = match pre {
                Some(p) => labels.iter().map(|&y| p.denormalize_label(y)).collect(),
                None => labels.to_vec(),
            };
            let sq: f64 = raw_preds
                .data()
                .iter()
                .zip(&raw_labels)
                .map(|(&p, &y)| (p - y) * (p - y))
                .sum();
            Ok((sq / labels.len() as f64).sqrt())
        }
        _ => {
            let classes: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
            accuracy(preds, &classes)
        }
    }
}

/// Class probabilities for classification predictions.
pub fn predict_probabilities(logits: &Matrix) -> Matrix {
    softmax_rows(logits)
}

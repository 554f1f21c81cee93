//! Corrector training over a frozen backbone.
//!
//! Each epoch has two phases. The shift phase (re-estimation variants only)
//! runs one pass over the simulated shift set, updating just the shift
//! estimator. The joint phase runs shuffled minibatches of the training
//! split through frozen representations and the corrector, updating every
//! active part on the prediction loss plus, when enabled, the basis
//! orthogonality penalty. Early stopping mirrors backbone training:
//! strict-improvement patience on the validation metric, best parameters
//! restored at the end.

use serde::{Deserialize, Serialize};

use crate::backbone::train::{improves, preds_metric, worst_metric};
use crate::backbone::{batch_indices, epoch_order, Backbone};
use crate::data::dataset::Dataset;
use crate::data::sampler::EmpiricalSampler;
use crate::data::split::Split;
use crate::diagnostics::grad_norms::per_sample_grad_norms;
use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, mse};
use crate::nn::matrix::Matrix;
use crate::nn::optim::adamw_step;
use crate::rng::{derive_seed, rng_from};
use crate::trc::losses::{orthogonality_backward, shift_epoch};
use crate::trc::{
    generate_simulated_shifts, select_optimal_set, CorrectorConfig, CorrectorKind, OptimalSet,
    OptimalSource, TrcCorrector, TrcHp,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrcEpochLog {
    pub epoch: usize,
    /// Mean shift-phase loss; absent when re-estimation is disabled.
    pub shift_loss: Option<f64>,
    /// Mean joint-phase prediction loss.
    pub pred_loss: f64,
    /// Mean orthogonality penalty; absent when the penalty is disabled.
    pub orth_loss: Option<f64>,
    pub val_metric: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrcTrainLog {
    pub epochs: Vec<TrcEpochLog>,
    pub best_epoch: Option<usize>,
    pub early_stopped: bool,
    /// Number of anchor samples behind the simulated shifts (0 when
    /// re-estimation is disabled).
    pub n_anchors: usize,
}

/// The dataset whose per-sample gradient norms choose the anchors.
fn anchor_source(split: &Split, source: OptimalSource) -> Result<Dataset> {
    match source {
        OptimalSource::Val => Ok(split.val.clone()),
        OptimalSource::TrainSlice => {
            let n = split.val.n_rows().min(split.train.n_rows());
            let start = split.train.n_rows() - n;
            let idx: Vec<usize> = (start..split.train.n_rows()).collect();
            split.train.take_rows(&idx)
        }
    }
}

/// Train a corrector on top of a frozen backbone (Algorithm: anchor
/// selection, shift simulation, then the two-phase epoch loop).
pub fn train_trc(
    bb: &mut Backbone,
    split: &Split,
    hp: &TrcHp,
    kind: CorrectorKind,
) -> Result<(TrcCorrector, TrcTrainLog)> {
    hp.validate()?;
    kind.validate()?;
    if !bb.is_frozen() {
        return Err(Error::ModelState(
            "corrector training requires a frozen backbone".into(),
        ));
    }
    let task = split.train.task();

    let mut shift_rng = rng_from(derive_seed(hp.seed, "trc-shifts"));
    let anchors: Option<OptimalSet> = if kind.use_reestimation {
        let source = anchor_source(split, hp.optimal_source)?;
        let table = per_sample_grad_norms(bb, &source, 1.0, 1.0)?;
        Some(select_optimal_set(bb, &source, &table, hp.tau)?)
    } else {
        None
    };
    let sampler = if kind.use_reestimation {
        Some(EmpiricalSampler::fit(&split.train)?)
    } else {
        None
    };
    let mut shifts = match (&anchors, &sampler) {
        (Some(a), Some(s)) => Some(generate_simulated_shifts(
            bb,
            a,
            s,
            &hp.sim,
            &mut shift_rng,
        )?),
        _ => None,
    };

    let config = CorrectorConfig {
        repr_dim: bb.repr_dim(),
        t: hp.t,
        n_outputs: task.n_outputs(),
        kind,
        seed: derive_seed(hp.seed, "trc-corrector"),
    };
    let mut corr = TrcCorrector::new(&config)?;

    // The backbone is frozen, so representations are constants: compute them
    // once and slice rows per batch.
    let z_train = bb.repr_eval(split.train.values())?;
    let z_val = bb.repr_eval(split.val.values())?;
    let y_train = split.train.labels_matrix();
    let cls_train = if task.is_classification() {
        Some(split.train.class_labels()?)
    } else {
        None
    };

    let mut shuffle_rng = rng_from(derive_seed(hp.seed, "trc-shuffle"));
    let n = split.train.n_rows();
    let mut log = TrcTrainLog {
        epochs: Vec::new(),
        best_epoch: None,
        early_stopped: false,
        n_anchors: anchors.as_ref().map_or(0, |a| a.len()),
    };
    let mut best_metric = worst_metric(task);
    let mut best_params: Option<Vec<Matrix>> = None;
    let mut stale = 0;

    for epoch in 0..hp.max_epochs {
        let shift_loss = match &mut shifts {
            Some(set) => {
                if hp.regen_shifts_per_epoch && epoch > 0 {
                    *set = generate_simulated_shifts(
                        bb,
                        anchors.as_ref().expect("anchors exist with shifts"),
                        sampler.as_ref().expect("sampler exists with shifts"),
                        &hp.sim,
                        &mut shift_rng,
                    )?;
                }
                Some(shift_epoch(corr.phi_mut(), set, hp.batch, &hp.optim)?)
            }
            None => None,
        };

        let order = epoch_order(n, &mut shuffle_rng);
        let mut pred_sum = 0.0;
        let mut orth_sum = 0.0;
        let mut batches = 0;
        for idx in batch_indices(n, hp.batch, &order) {
            let z = z_train.take_rows(&idx)?;
            corr.zero_grads();
            let preds = corr.forward_train(&z)?;
            let (pred_loss, grad) = match &cls_train {
                None => mse(&preds, &y_train.take_rows(&idx)?)?,
                Some(cls) => {
                    let ys: Vec<usize> = idx.iter().map(|&i| cls[i]).collect();
                    cross_entropy(&preds, &ys)?
                }
            };
            corr.backward(&grad)?;
            if kind.use_orth {
                orth_sum += orthogonality_backward(corr.le_mut(), hp.t, hp.orth_weight)?;
            }
            adamw_step(corr.active_param_blocks_mut(), &hp.optim);
            pred_sum += pred_loss;
            batches += 1;
        }

        let val_preds = corr.predict_eval(&z_val)?;
        let val_metric = preds_metric(&val_preds, &split.val)?;
        log.epochs.push(TrcEpochLog {
            epoch,
            shift_loss,
            pred_loss: pred_sum / batches as f64,
            orth_loss: kind.use_orth.then(|| orth_sum / batches as f64),
            val_metric,
        });

        if improves(task, val_metric, best_metric) {
            best_metric = val_metric;
            log.best_epoch = Some(epoch);
            best_params = Some(corr.param_values());
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
        corr.restore_param_values(&params)?;
    }
    Ok((corr, log))
}

/// Predictions for raw (preprocessed) feature rows through backbone and
/// corrector. Pure.
pub fn infer_trc(bb: &Backbone, corr: &TrcCorrector, rows: &Matrix) -> Result<Matrix> {
    corr.predict_eval(&bb.repr_eval(rows)?)
}

/// Corrected representations for raw (preprocessed) feature rows. Pure.
pub fn corrected_representations(
    bb: &Backbone,
    corr: &TrcCorrector,
    rows: &Matrix,
) -> Result<Matrix> {
    corr.corrected_eval(&bb.repr_eval(rows)?)
}

//! Representation correction for frozen backbones.
//!
//! The corrector sits between a frozen backbone's representation and a fresh
//! prediction head, and composes up to three moves:
//!
//! 1. **Shift re-estimation** — a small MLP `phi` trained to predict, from a
//!    perturbed representation, how far it drifted from its clean anchor;
//!    subtracting the prediction pulls representations back toward the
//!    manifold the backbone handles well.
//! 2. **Light-embedding mapping** — a softmax coordinate head over `t`
//!    learned basis directions rebuilds the representation as a convex
//!    combination of at most `t` vectors, bounding its effective rank.
//! 3. **Basis orthogonality** — a penalty on pairwise cosines keeps the
//!    basis directions from collapsing onto each other.
//!
//! Training data for `phi` is simulated: the anchor samples the backbone
//! already fits best (smallest per-sample feature-gradient norms) are
//! corrupted by resampling most feature cells from the training marginals,
//! and the observed representation drift becomes the regression target.

pub mod checkpoint;
pub mod losses;
pub mod train;

pub use checkpoint::{load_corrector, save_corrector};
pub use losses::{
    fit_shift_estimator, orthogonality_backward, orthogonality_loss_value, shift_epoch,
    shift_loss_value,
};
pub use train::{corrected_representations, infer_trc, train_trc, TrcEpochLog, TrcTrainLog};

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::data::dataset::Dataset;
use crate::data::sampler::EmpiricalSampler;
use crate::diagnostics::grad_norms::GradNormTable;
use crate::error::{Error, Result};
use crate::nn::gradcheck::Parameterized;
use crate::nn::layers::{Layer, LayerStack};
use crate::nn::matrix::Matrix;
use crate::nn::optim::OptimHp;
use crate::nn::param::ParamBlock;
use crate::rng::{rng_from, Fnv1a64};

/// Which dataset the anchor samples are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalSource {
    /// Diagnose the validation split.
    Val,
    /// Diagnose a validation-sized slice off the end of the training split
    /// (keeps the validation split untouched by correction).
    TrainSlice,
}

/// Knobs for simulating representation shifts.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShiftSimConfig {
    /// Distinct corruption masks per anchor sample.
    pub m: usize,
    /// Keep-probability range: each anchor draws `eta` uniformly from
    /// `[eta_min, eta_max]` and keeps each feature cell with probability
    /// `eta` (so most cells are resampled).
    pub eta_min: f64,
    pub eta_max: f64,
    /// When false, `eta` is interpreted as the corruption probability
    /// instead (the mask keeps cells with probability `1 - eta`).
    pub mask_means_keep: bool,
}

impl Default for ShiftSimConfig {
    fn default() -> Self {
        ShiftSimConfig {
            m: 3,
            eta_min: 0.1,
            eta_max: 0.3,
            mask_means_keep: true,
        }
    }
}

impl ShiftSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("need at least one corruption mask"));
        }
        if !(0.0..=1.0).contains(&self.eta_min)
            || !(0.0..=1.0).contains(&self.eta_max)
            || self.eta_min > self.eta_max
        {
            return Err(Error::invalid(
                "keep-probability range must satisfy 0 <= eta_min <= eta_max <= 1",
            ));
        }
        Ok(())
    }
}

/// Which corrective moves a corrector applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectorKind {
    pub use_reestimation: bool,
    pub use_mapping: bool,
    pub use_orth: bool,
}

impl CorrectorKind {
    pub fn full() -> Self {
        CorrectorKind {
            use_reestimation: true,
            use_mapping: true,
            use_orth: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_orth && !self.use_mapping {
            return Err(Error::invalid(
                "the orthogonality penalty applies to the mapping basis; enable mapping",
            ));
        }
        if !self.use_reestimation && !self.use_mapping {
            return Err(Error::invalid(
                "a corrector needs at least one of re-estimation and mapping",
            ));
        }
        Ok(())
    }
}

/// Hyper-parameters for corrector training.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrcHp {
    /// Fraction of the diagnosed split kept as anchors.
    pub tau: f64,
    pub sim: ShiftSimConfig,
    /// Number of basis directions in the light-embedding space.
    pub t: usize,
    /// Weight on the basis-orthogonality penalty.
    pub orth_weight: f64,
    pub optimal_source: OptimalSource,
    /// Redraw the simulated shifts at the start of every epoch instead of
    /// once up front.
    pub regen_shifts_per_epoch: bool,
    pub optim: OptimHp,
    pub batch: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrcHp {
    fn default() -> Self {
        TrcHp {
            tau: 0.01,
            sim: ShiftSimConfig::default(),
            t: 10,
            orth_weight: 1.0,
            optimal_source: OptimalSource::Val,
            regen_shifts_per_epoch: false,
            optim: OptimHp::default(),
            batch: 128,
            patience: 10,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrcHp {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid("tau must lie in (0, 1]"));
        }
        if self.t == 0 {
            return Err(Error::invalid("need at least one basis direction"));
        }
        if self.orth_weight < 0.0 {
            return Err(Error::invalid("orthogonality weight must be nonnegative"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.sim.validate()
    }
}

/// The anchor samples a corrector trusts, with their representations.
#[derive(Clone, Debug)]
pub struct OptimalSet {
    /// Row indices into the diagnosed dataset, ascending gradient norm.
    pub indices: Vec<usize>,
    /// The selected rows themselves.
    pub samples: Dataset,
    /// Frozen-backbone representations of the selected rows (K x D).
    pub reprs: Matrix,
}

impl OptimalSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Keep the `floor(tau * n)` samples (at least one) with the smallest
/// per-sample gradient norms: the ones the frozen backbone fits best.
pub fn select_optimal_set(
    bb: &Backbone,
    source: &Dataset,
    table: &GradNormTable,
    tau: f64,
) -> Result<OptimalSet> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau must lie in (0, 1]"));
    }
    if table.entries.len() != source.n_rows() {
        return Err(Error::invalid(format!(
            "gradient table covers {} samples, dataset has {}",
            table.entries.len(),
            source.n_rows()
        )));
    }
    let k = ((tau * source.n_rows() as f64).floor() as usize).max(1);
    let indices = table.lowest(k);
    let samples = source.take_rows(&indices)?;
    let reprs = bb.repr_eval(samples.values())?;
    Ok(OptimalSet {
        indices,
        samples,
        reprs,
    })
}

/// Supervised pairs for shift estimation.
#[derive(Clone, Debug)]
pub struct SimulatedShiftSet {
    /// `K * (m + 1)` rows: perturbed representations (anchor-major,
    /// mask-minor), then the K clean anchor representations.
    pub inputs: Matrix,
    /// Matching targets: the observed drift `z_perturbed - z_clean` for
    /// perturbed rows, zeros for the clean rows.
    pub targets: Matrix,
    /// Number of perturbed rows at the front of `inputs`.
    pub n_perturbed: usize,
}

impl SimulatedShiftSet {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// Corrupt each anchor under `m` distinct random masks, push the corrupted
/// rows through the frozen backbone, and record the representation drifts.
/// Every anchor also contributes one clean pair with zero target, teaching
/// the estimator to leave on-manifold representations alone.
pub fn generate_simulated_shifts<R: Rng + ?Sized>(
    bb: &Backbone,
    anchors: &OptimalSet,
    sampler: &EmpiricalSampler,
    sim: &ShiftSimConfig,
    rng: &mut R,
) -> Result<SimulatedShiftSet> {
    sim.validate()?;
    if anchors.is_empty() {
        return Err(Error::invalid("cannot simulate shifts without anchors"));
    }
    let d_in = anchors.samples.n_columns();
    if sampler.n_columns() != d_in {
        return Err(Error::shape(
            "generate_simulated_shifts",
            format!(
                "sampler covers {} columns, anchors have {}",
                sampler.n_columns(),
                d_in
            ),
        ));
    }

    let k = anchors.len();
    let mut corrupted = Matrix::zeros(k * sim.m, d_in);
    for a in 0..k {
        let eta = if sim.eta_max > sim.eta_min {
            rng.gen_range(sim.eta_min..sim.eta_max)
        } else {
            sim.eta_min
        };
        let keep_p = if sim.mask_means_keep { eta } else { 1.0 - eta };
        // One marginal resample per anchor, shared across its masks, so the
        // masks alone decide which cells drift.
        let noise = sampler.sample_row(rng);
        let row = anchors.samples.values().row(a);

        let mut seen: HashSet<Vec<bool>> = HashSet::with_capacity(sim.m);
        for m_i in 0..sim.m {
            let mut mask = draw_mask(d_in, keep_p, rng);
            let mut retries = 0;
            while seen.contains(&mask) && retries < 64 {
                mask = draw_mask(d_in, keep_p, rng);
                retries += 1;
            }
            if seen.contains(&mask) {
                log::warn!(
                    "could not find a distinct corruption mask after 64 retries \
                     (anchor {a}, {d_in} columns); reusing a duplicate"
                );
            }
            let out = corrupted.row_mut(a * sim.m + m_i);
            for j in 0..d_in {
                out[j] = if mask[j] { row[j] } else { noise[j] };
            }
            seen.insert(mask);
        }
    }

    let perturbed_reprs = bb.repr_eval(&corrupted)?;
    let mut deltas = perturbed_reprs.clone();
    for a in 0..k {
        let clean = anchors.reprs.row(a).to_vec();
        for m_i in 0..sim.m {
            let row = deltas.row_mut(a * sim.m + m_i);
            for (d, c) in row.iter_mut().zip(&clean) {
                *d -= c;
            }
        }
    }

    let inputs = Matrix::vstack(&[&perturbed_reprs, &anchors.reprs])?;
    let zeros = Matrix::zeros(k, anchors.reprs.cols());
    let targets = Matrix::vstack(&[&deltas, &zeros])?;
    Ok(SimulatedShiftSet {
        inputs,
        targets,
        n_perturbed: k * sim.m,
    })
}

fn draw_mask<R: Rng + ?Sized>(d: usize, keep_p: f64, rng: &mut R) -> Vec<bool> {
    (0..d)
        .map(|_| rng.gen_bool(keep_p.clamp(0.0, 1.0)))
        .collect()
}

/// A learned `t x d` basis spanning the light-embedding space.
#[derive(Clone, Debug)]
pub struct LESpace {
    pub basis: ParamBlock,
}

impl LESpace {
    pub fn new<R: Rng + ?Sized>(t: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if t == 0 || dim == 0 {
            return Err(Error::invalid("basis needs at least one row and column"));
        }
        let bound = 1.0 / (dim as f64).sqrt();
        Ok(LESpace {
            basis: ParamBlock::uniform(t, dim, bound, rng),
        })
    }

    pub fn t(&self) -> usize {
        self.basis.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.basis.value.cols()
    }
}

/// Map softmax coordinates (N x t) into representation space (N x d).
pub fn map_to_le_space(coords: &Matrix, le: &LESpace) -> Result<Matrix> {
    coords.matmul(&le.basis.value)
}

/// Subtract the estimated shift: the re-estimated representation
/// `z - phi(z)`.
pub fn re_estimate(phi: &LayerStack, z: &Matrix) -> Result<Matrix> {
    z.sub(&phi.eval(z)?)
}

fn build_shift_estimator<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> LayerStack {
    LayerStack::new(vec![
        Layer::linear(dim, dim, rng),
        Layer::Relu,
        Layer::linear(dim, dim, rng),
        Layer::Relu,
        Layer::linear(dim, dim, rng),
    ])
}

/// A fresh two-hidden-layer shift estimator over `dim`-wide representations.
pub fn new_shift_estimator(dim: usize, seed: u64) -> LayerStack {
    build_shift_estimator(dim, &mut rng_from(seed))
}

fn build_coord_estimator<R: Rng + ?Sized>(dim: usize, t: usize, rng: &mut R) -> LayerStack {
    LayerStack::new(vec![Layer::linear(dim, t, rng), Layer::Softmax])
}

/// Static shape and routing description of a corrector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectorConfig {
    pub repr_dim: usize,
    pub t: usize,
    pub n_outputs: usize,
    pub kind: CorrectorKind,
    pub seed: u64,
}

impl CorrectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repr_dim == 0 || self.t == 0 || self.n_outputs == 0 {
            return Err(Error::invalid(
                "corrector dimensions must all be at least 1",
            ));
        }
        self.kind.validate()
    }
}

/// The corrector: shift estimator, coordinate estimator, basis and a fresh
/// head. All four parts are always constructed (so checkpoints have a
/// uniform shape); `kind` decides which take part in the forward pass and
/// which receive gradients.
#[derive(Clone, Debug)]
pub struct TrcCorrector {
    config: CorrectorConfig,
    phi: LayerStack,
    coord: LayerStack,
    le: LESpace,
    head: LayerStack,
    coords_cache: Option<Matrix>,
}

impl TrcCorrector {
    pub fn new(config: &CorrectorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(config.seed);
        let phi = build_shift_estimator(config.repr_dim, &mut rng);
        let coord = build_coord_estimator(config.repr_dim, config.t, &mut rng);
        let le = LESpace::new(config.t, config.repr_dim, &mut rng)?;
        let head = LayerStack::new(vec![Layer::linear(
            config.repr_dim,
            config.n_outputs,
            &mut rng,
        )]);
        Ok(TrcCorrector {
            config: *config,
            phi,
            coord,
            le,
            head,
            coords_cache: None,
        })
    }

    pub fn config(&self) -> &CorrectorConfig {
        &self.config
    }

    pub fn kind(&self) -> CorrectorKind {
        self.config.kind
    }

    pub fn basis(&self) -> &Matrix {
        &self.le.basis.value
    }

    pub fn le_mut(&mut self) -> &mut LESpace {
        &mut self.le
    }

    pub fn phi(&self) -> &LayerStack {
        &self.phi
    }

    pub fn phi_mut(&mut self) -> &mut LayerStack {
        &mut self.phi
    }

    /// Training-mode forward from backbone representations to predictions,
    /// caching what the reverse pass needs.
    pub fn forward_train(&mut self, z: &Matrix) -> Result<Matrix> {
        let kind = self.config.kind;
        let re = if kind.use_reestimation {
            z.sub(&self.phi.forward(z)?)?
        } else {
            z.clone()
        };
        let mapped = if kind.use_mapping {
            let coords = self.coord.forward(&re)?;
            let mapped = coords.matmul(&self.le.basis.value)?;
            self.coords_cache = Some(coords);
            mapped
        } else {
            self.coords_cache = None;
            re
        };
        self.head.forward(&mapped)
    }

    /// Reverse pass from prediction gradients into every active part.
    pub fn backward(&mut self, grad_preds: &Matrix) -> Result<()> {
        let kind = self.config.kind;
        let grad_mapped = self.head.backward(grad_preds)?;
        let grad_re = if kind.use_mapping {
            let coords = self
                .coords_cache
                .as_ref()
                .ok_or_else(|| Error::ModelState("backward called before forward".into()))?;
            // mapped = coords * basis: split the gradient between them.
            self.le
                .basis
                .grad
                .axpy(1.0, &coords.matmul_at_b(&grad_mapped)?)?;
            let grad_coords = grad_mapped.matmul_a_bt(&self.le.basis.value)?;
            self.coord.backward(&grad_coords)?
        } else {
            grad_mapped
        };
        if kind.use_reestimation {
            // re = z - phi(z), so phi's output gradient is the negation.
            self.phi.backward(&grad_re.map(|v| -v))?;
        }
        Ok(())
    }

    /// Pure corrected representation (after re-estimation and mapping,
    /// before the head).
    pub fn corrected_eval(&self, z: &Matrix) -> Result<Matrix> {
        let kind = self.config.kind;
        let re = if kind.use_reestimation {
            re_estimate(&self.phi, z)?
        } else {
            z.clone()
        };
        if kind.use_mapping {
            map_to_le_space(&self.coord.eval(&re)?, &self.le)
        } else {
            Ok(re)
        }
    }

    /// Pure prediction from backbone representations.
    pub fn predict_eval(&self, z: &Matrix) -> Result<Matrix> {
        self.head.eval(&self.corrected_eval(z)?)
    }

    /// Pure softmax coordinates over the basis. Only meaningful when the
    /// mapping is part of this corrector.
    pub fn coordinates_eval(&self, z: &Matrix) -> Result<Matrix> {
        if !self.config.kind.use_mapping {
            return Err(Error::ModelState(
                "this corrector has no light-embedding mapping".into(),
            ));
        }
        let re = if self.config.kind.use_reestimation {
            re_estimate(&self.phi, z)?
        } else {
            z.clone()
        };
        self.coord.eval(&re)
    }

    /// Parameters the optimizer may touch, given the routing flags.
    pub fn active_param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let kind = self.config.kind;
        let mut out = Vec::new();
        if kind.use_reestimation {
            out.extend(self.phi.param_blocks_mut());
        }
        if kind.use_mapping {
            out.extend(self.coord.param_blocks_mut());
            out.push(&mut self.le.basis);
        }
        out.extend(self.head.param_blocks_mut());
        out
    }

    pub fn zero_grads(&mut self) {
        for b in self.all_param_blocks_mut() {
            b.zero_grad();
        }
    }

    fn all_param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out = self.phi.param_blocks_mut();
        out.extend(self.coord.param_blocks_mut());
        out.push(&mut self.le.basis);
        out.extend(self.head.param_blocks_mut());
        out
    }

    /// Every parameter tensor in fixed order (phi, coord, basis, head),
    /// active or not.
    pub fn param_values(&self) -> Vec<Matrix> {
        let mut out = self.phi.param_values();
        out.extend(self.coord.param_values());
        out.push(self.le.basis.value.clone());
        out.extend(self.head.param_values());
        out
    }

    pub fn restore_param_values(&mut self, values: &[Matrix]) -> Result<()> {
        let mut blocks = self.all_param_blocks_mut();
        if blocks.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "corrector has {} parameter tensors, snapshot has {}",
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

impl Parameterized for TrcCorrector {
    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.active_param_blocks_mut()
    }
}

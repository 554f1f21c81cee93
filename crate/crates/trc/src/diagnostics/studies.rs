//! Empirical studies: noise robustness of backbone training, and a direct
//! check that a learned shift estimator moves an under-trained backbone's
//! representations toward those of a longer-trained twin.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{evaluate, train_backbone, Backbone, BackboneConfig, TrainHp};
use crate::data::dataset::Dataset;
use crate::data::preprocess::{PreprocessMode, Preprocessor};
use crate::data::sampler::{inject_feature_noise, EmpiricalSampler};
use crate::data::split::{split_dataset, Split, SplitRatios};
use crate::diagnostics::grad_norms::per_sample_grad_norms;
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::nn::matrix::Matrix;
use crate::nn::optim::OptimHp;
use crate::rng::{derive_seed, rng_from};
use crate::trc::{
    fit_shift_estimator, generate_simulated_shifts, new_shift_estimator, re_estimate,
    select_optimal_set, ShiftSimConfig,
};

/// Everything needed to train one backbone inside a study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRecipe {
    pub backbone: BackboneConfig,
    pub train: TrainHp,
    pub ratios: SplitRatios,
    pub preprocess: PreprocessMode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseStudyRow {
    /// Fraction of training cells replaced by marginal resamples.
    pub ratio: f64,
    pub seed: u64,
    /// Test metric in original label units (RMSE or accuracy).
    pub metric: f64,
}

/// Train one backbone per (noise ratio, seed) pair with the given fraction
/// of *training* feature cells resampled from their column marginals, and
/// score each on the untouched test split. Preprocessing is refit on the
/// noised training data, exactly as a practitioner facing dirty data would.
pub fn noise_robustness_study(
    ds: &Dataset,
    recipe: &StudyRecipe,
    noise_ratios: &[f64],
    seeds: &[u64],
) -> Result<Vec<NoiseStudyRow>> {
    if noise_ratios.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("need at least one noise ratio and one seed"));
    }
    let mut rows = Vec::with_capacity(noise_ratios.len() * seeds.len());
    for (ri, &ratio) in noise_ratios.iter().enumerate() {
        for &seed in seeds {
            let split = split_dataset(ds, &recipe.ratios, derive_seed(seed, "study-split"))?;
            let sampler = EmpiricalSampler::fit(&split.train)?;
            let mut noise_rng = rng_from(derive_seed(seed, &format!("study-noise-{ri}")));
            let noised_train = inject_feature_noise(&split.train, ratio, &sampler, &mut noise_rng)?;
            let split = Split {
                train: noised_train,
                val: split.val,
                test: split.test,
            };
            let (pre, split) = Preprocessor::fit_apply(&split, recipe.preprocess)?;

            let cfg = BackboneConfig {
                seed: derive_seed(seed, "study-backbone"),
                ..recipe.backbone
            };
            let mut bb = Backbone::new(&cfg, split.train.schema(), ds.task())?;
            train_backbone(&mut bb, &split, &recipe.train)?;

            let preds = bb.predict_eval(split.test.values())?;
            let metric = evaluate(&preds, split.test.labels(), ds.task(), Some(&pre))?;
            rows.push(NoiseStudyRow {
                ratio,
                seed,
                metric,
            });
        }
    }
    Ok(rows)
}

/// Mean metric per ratio, preserving the order ratios first appear in.
pub fn noise_study_means(rows: &[NoiseStudyRow]) -> Vec<(f64, f64)> {
    let mut ratios: Vec<f64> = Vec::new();
    for row in rows {
        if !ratios.contains(&row.ratio) {
            ratios.push(row.ratio);
        }
    }
    ratios
        .into_iter()
        .map(|ratio| {
            let metrics: Vec<f64> = rows
                .iter()
                .filter(|r| r.ratio == ratio)
                .map(|r| r.metric)
                .collect();
            (ratio, metrics.iter().sum::<f64>() / metrics.len() as f64)
        })
        .collect()
}

/// Write study rows as `ratio,seed,metric` CSV.
pub fn write_noise_study_csv(rows: &[NoiseStudyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ratio", "seed", "metric"])
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
    for row in rows {
        w.write_record([
            row.ratio.to_string(),
            row.seed.to_string(),
            row.metric.to_string(),
        ])
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    write_atomic(path, &bytes)
}

/// Settings for [`heavy_light_shift_oracle`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShiftOracleSettings {
    pub backbone: BackboneConfig,
    pub ratios: SplitRatios,
    pub preprocess: PreprocessMode,
    pub optim: OptimHp,
    pub batch: usize,
    /// Epochs for the under-trained twin.
    pub epochs_light: usize,
    /// Epochs for the reference twin; must exceed `epochs_light`.
    pub epochs_heavy: usize,
    /// Fraction of the validation split kept as anchor samples.
    pub tau: f64,
    pub sim: ShiftSimConfig,
    /// Epochs for fitting the shift estimator.
    pub phi_epochs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShiftOracleOutcome {
    /// Mean per-row L2 distance between light and heavy test
    /// representations.
    pub dist_without: f64,
    /// Same distance after subtracting the estimated shift from the light
    /// representations.
    pub dist_with: f64,
}

/// Ground-truth check for shift estimation. Two identically initialized
/// backbones are trained for a short and a long budget; the long one stands
/// in for the "ideal" feature extractor. A shift estimator fit only on the
/// light backbone's simulated perturbations should pull the light
/// representations measurably closer to the heavy ones.
pub fn heavy_light_shift_oracle(
    ds: &Dataset,
    s: &ShiftOracleSettings,
) -> Result<ShiftOracleOutcome> {
    if s.epochs_light >= s.epochs_heavy {
        return Err(Error::invalid(
            "the light budget must be smaller than the heavy budget",
        ));
    }
    let split = split_dataset(ds, &s.ratios, derive_seed(s.seed, "oracle-split"))?;
    let (_pre, split) = Preprocessor::fit_apply(&split, s.preprocess)?;

    let mut light = Backbone::new(&s.backbone, split.train.schema(), ds.task())?;
    let mut heavy = light.clone();
    let budget = |epochs: usize| TrainHp {
        optim: s.optim,
        batch: s.batch,
        patience: usize::MAX,
        max_epochs: epochs,
        restore_best: false,
    };
    train_backbone(&mut light, &split, &budget(s.epochs_light))?;
    train_backbone(&mut heavy, &split, &budget(s.epochs_heavy))?;
    light.freeze();
    heavy.freeze();

    let table = per_sample_grad_norms(&mut light, &split.val, 1.0, 1.0)?;
    let anchors = select_optimal_set(&light, &split.val, &table, s.tau)?;
    let sampler = EmpiricalSampler::fit(&split.train)?;
    let mut rng = rng_from(derive_seed(s.seed, "oracle-shifts"));
    let shifts = generate_simulated_shifts(&light, &anchors, &sampler, &s.sim, &mut rng)?;

    let mut phi = new_shift_estimator(light.repr_dim(), derive_seed(s.seed, "oracle-phi"));
    fit_shift_estimator(&mut phi, &shifts, s.phi_epochs, s.batch, &s.optim)?;

    let z_light = light.repr_eval(split.test.values())?;
    let z_heavy = heavy.repr_eval(split.test.values())?;
    let corrected = re_estimate(&phi, &z_light)?;
    Ok(ShiftOracleOutcome {
        dist_without: mean_row_distance(&z_light, &z_heavy)?,
        dist_with: mean_row_distance(&corrected, &z_heavy)?,
    })
}

fn mean_row_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if !a.same_shape(b) || a.rows() == 0 {
        return Err(Error::shape(
            "mean_row_distance",
            format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let total: f64 = (0..a.rows())
        .map(|r| {
            a.row(r)
                .iter()
                .zip(b.row(r))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / a.rows() as f64)
}

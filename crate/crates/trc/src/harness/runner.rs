//! Experiment orchestration: one dataset, many seeds, many variants.
//!
//! Per seed: split, optional cell masking and training noise, preprocessing,
//! one shared backbone (trained once, frozen, reused by every corrector
//! variant), then per-variant training and evaluation. Every random draw
//! descends from the seed list through tagged seed derivation, so a rerun
//! of the same config reproduces every metric bit-for-bit; only the
//! `seconds` fields differ.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::backbone::{
    evaluate, save_backbone, train_backbone, Backbone, BackboneConfig, TrainLog,
};
use crate::data::dataset::{Dataset, TaskKind};
use crate::data::preprocess::Preprocessor;
use crate::data::sampler::{inject_feature_noise, EmpiricalSampler};
use crate::data::schema::ColumnKind;
use crate::data::split::{split_dataset, Split};
use crate::diagnostics::sve;
use crate::error::{Error, Result};
use crate::fsio::write_json_atomic;
use crate::harness::config::{ExperimentConfig, Variant};
use crate::harness::report::{metric_name, summarize, write_report, Report, RunRow};
use crate::harness::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::rng::{derive_seed, rng_from};
use crate::trc::{corrected_representations, infer_trc, save_corrector, train_trc, TrcTrainLog};

/// Per-seed training traces, written as `log.json` in the seed directory.
#[derive(Serialize)]
struct SeedLog {
    seed: u64,
    backbone: Option<TrainLog>,
    deeper_backbone: Option<TrainLog>,
    correctors: BTreeMap<String, TrcTrainLog>,
}

/// Mask feature cells at random in every split and impute them from the
/// *observed* training cells: column mean for numerical columns, most
/// frequent code (smallest on ties) for categorical ones.
pub(crate) fn apply_missingness(split: &Split, ratio: f64, seed: u64) -> Result<Split> {
    let mut rng = rng_from(derive_seed(seed, "missing"));
    let n_cols = split.train.n_columns();
    let mut draw = |ds: &Dataset| -> Vec<Vec<bool>> {
        (0..ds.n_rows())
            .map(|_| (0..n_cols).map(|_| rng.gen_bool(ratio)).collect())
            .collect()
    };
    let masks = [draw(&split.train), draw(&split.val), draw(&split.test)];

    let schema = split.train.schema().clone();
    let mut impute = vec![0.0; n_cols];
    for (j, value) in impute.iter_mut().enumerate() {
        let observed: Vec<f64> = (0..split.train.n_rows())
            .filter(|&r| !masks[0][r][j])
            .map(|r| split.train.values().get(r, j))
            .collect();
        if observed.is_empty() {
            return Err(Error::Numerical(format!(
                "column '{}' lost every training value to masking",
                schema.column(j).name
            )));
        }
        *value = match schema.column(j).kind {
            ColumnKind::Numerical => observed.iter().sum::<f64>() / observed.len() as f64,
            ColumnKind::Categorical { cardinality } => {
                let mut counts = vec![0usize; cardinality];
                for &v in &observed {
                    counts[v as usize] += 1;
                }
                counts
                    .iter()
                    .enumerate()
                    .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
                    .expect("cardinality >= 1")
                    .0 as f64
            }
        };
    }

    let apply = |ds: &Dataset, mask: &[Vec<bool>]| -> Result<Dataset> {
        let mut values = ds.values().clone();
        for (r, row) in mask.iter().enumerate() {
            for (j, &masked) in row.iter().enumerate() {
                if masked {
                    values.set(r, j, impute[j]);
                }
            }
        }
        ds.with_features(values, ds.labels().to_vec())
    };
    Ok(Split {
        train: apply(&split.train, &masks[0])?,
        val: apply(&split.val, &masks[1])?,
        test: apply(&split.test, &masks[2])?,
    })
}

/// The seed's data split with the config's masking and training-noise
/// treatments applied, *before* preprocessing.
pub fn raw_seed_split(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> Result<Split> {
    let split = split_dataset(ds, &cfg.ratios(), derive_seed(seed, "split"))?;
    let split = if cfg.missing_ratio > 0.0 {
        apply_missingness(&split, cfg.missing_ratio, seed)?
    } else {
        split
    };
    if cfg.train_noise_ratio > 0.0 {
        let sampler = EmpiricalSampler::fit(&split.train)?;
        let mut rng = rng_from(derive_seed(seed, "train-noise"));
        Ok(Split {
            train: inject_feature_noise(&split.train, cfg.train_noise_ratio, &sampler, &mut rng)?,
            val: split.val,
            test: split.test,
        })
    } else {
        Ok(split)
    }
}

/// The seed's split, treated and preprocessed, with the fit preprocessor.
pub fn prepare_seed_split(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    seed: u64,
) -> Result<(Preprocessor, Split)> {
    let split = raw_seed_split(cfg, ds, seed)?;
    Preprocessor::fit_apply(&split, cfg.preprocess)
}

/// Baseline-vs-full-correction Wilcoxon over matched seeds, oriented so
/// small p-values support the correction. Reported only with >= 6 pairs;
/// degenerate samples (all ties) yield no test rather than a failure.
pub(crate) fn build_significance(
    rows: &[RunRow],
    seeds: &[u64],
    task: TaskKind,
) -> Option<WilcoxonResult> {
    let metric_of = |variant: Variant, seed: u64| {
        rows.iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .map(|r| r.metric)
    };
    let mut pairs = Vec::new();
    for &seed in seeds {
        if let (Some(base), Some(corrected)) = (
            metric_of(Variant::Baseline, seed),
            metric_of(Variant::Trc, seed),
        ) {
            pairs.push(if task.is_classification() {
                (corrected, base)
            } else {
                (base, corrected)
            });
        }
    }
    if pairs.len() < 6 {
        return None;
    }
    match wilcoxon_signed_rank(&pairs) {
        Ok(w) => Some(w),
        Err(e) => {
            log::warn!("skipping significance test: {e}");
            None
        }
    }
}

fn test_metric_and_sve(
    preds: &crate::nn::matrix::Matrix,
    reprs: &crate::nn::matrix::Matrix,
    test: &Dataset,
    task: TaskKind,
    pre: &Preprocessor,
) -> Result<(f64, f64)> {
    let metric = evaluate(preds, test.labels(), task, Some(pre))?;
    let spectrum = sve(reprs)?;
    Ok((metric, spectrum.sve))
}

/// Run the configured experiment, writing checkpoints, per-seed logs and the
/// report (JSON + CSV) under `<out_dir>/<name>/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let task = ds.task();
    let run_dir = cfg.run_dir();
    let needs_base = cfg.variants.iter().any(|v| *v != Variant::DeeperBaseline);
    let mut rows: Vec<RunRow> = Vec::new();

    for &seed in &cfg.seeds {
        let seed_dir = run_dir.join(format!("seed{seed}"));
        let (pre, split) = prepare_seed_split(cfg, &ds, seed)?;

        let mut base: Option<(Backbone, f64)> = None;
        let mut backbone_log: Option<TrainLog> = None;
        if needs_base {
            let bb_cfg = cfg.backbone_config(derive_seed(seed, "backbone"));
            let mut bb = Backbone::new(&bb_cfg, split.train.schema(), task)?;
            let start = Instant::now();
            let log = train_backbone(&mut bb, &split, &cfg.train_hp())?;
            let secs = start.elapsed().as_secs_f64();
            bb.freeze();
            save_backbone(&seed_dir.join("backbone.ckpt"), &bb, &pre)?;
            backbone_log = Some(log);
            base = Some((bb, secs));
        }

        let mut deeper_log: Option<TrainLog> = None;
        let mut corrector_logs: BTreeMap<String, TrcTrainLog> = BTreeMap::new();

        for &variant in &cfg.variants {
            let (metric, sve_value, seconds) = match variant.corrector_kind() {
                None => {
                    if variant == Variant::Baseline {
                        let (bb, secs) = base.as_ref().expect("baseline uses the shared backbone");
                        let preds = bb.predict_eval(split.test.values())?;
                        let reprs = bb.repr_eval(split.test.values())?;
                        let (metric, sv) =
                            test_metric_and_sve(&preds, &reprs, &split.test, task, &pre)?;
                        (metric, sv, *secs)
                    } else {
                        let bb_cfg = BackboneConfig {
                            depth: cfg.depth + 3,
                            ..cfg.backbone_config(derive_seed(seed, "backbone-deep"))
                        };
                        let mut bb = Backbone::new(&bb_cfg, split.train.schema(), task)?;
                        let start = Instant::now();
                        let log = train_backbone(&mut bb, &split, &cfg.train_hp())?;
                        let secs = start.elapsed().as_secs_f64();
                        deeper_log = Some(log);
                        let preds = bb.predict_eval(split.test.values())?;
                        let reprs = bb.repr_eval(split.test.values())?;
                        let (metric, sv) =
                            test_metric_and_sve(&preds, &reprs, &split.test, task, &pre)?;
                        (metric, sv, secs)
                    }
                }
                Some(kind) => {
                    let (shared, base_secs) = base
                        .as_ref()
                        .expect("corrector variants use the shared backbone");
                    let mut bb = shared.clone();
                    let start = Instant::now();
                    let (corr, log) =
                        train_trc(&mut bb, &split, &cfg.trc_hp(derive_seed(seed, "trc")), kind)?;
                    let secs = base_secs + start.elapsed().as_secs_f64();
                    if variant == Variant::Trc {
                        save_corrector(&seed_dir.join("trc.ckpt"), &corr, &bb)?;
                    }
                    corrector_logs.insert(variant.label().to_string(), log);
                    let preds = infer_trc(&bb, &corr, split.test.values())?;
                    let reprs = corrected_representations(&bb, &corr, split.test.values())?;
                    let (metric, sv) =
                        test_metric_and_sve(&preds, &reprs, &split.test, task, &pre)?;
                    (metric, sv, secs)
                }
            };
            rows.push(RunRow {
                variant,
                seed,
                metric,
                sve: sve_value,
                seconds,
            });
        }

        write_json_atomic(
            &seed_dir.join("log.json"),
            &SeedLog {
                seed,
                backbone: backbone_log,
                deeper_backbone: deeper_log,
                correctors: corrector_logs,
            },
        )?;
    }

    let report = Report {
        name: cfg.name.clone(),
        task,
        metric_name: metric_name(task).to_string(),
        summaries: summarize(&rows),
        wilcoxon: build_significance(&rows, &cfg.seeds, task),
        rows,
    };
    write_report(&run_dir, &report)?;
    Ok(report)
}

//! Release acceptance suite.
//!
//! Each test checks one contract-level guarantee of the crate and prints a
//! single `acceptance NN <name>: PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`). The checks range from
//! numerical ground truths (finite-difference gradients, closed-form
//! spectral entropies, enumerated signed-rank p-values) to end-to-end
//! behaviour of the experiment harness (correction beating the frozen
//! baseline on noisy data, bit-identical reruns).

use std::time::Instant;

use rand::Rng;

use trc::backbone::{train_backbone, Architecture, Backbone, BackboneConfig, TrainHp};
use trc::data::{
    generate_synthetic, split_dataset, PreprocessMode, Preprocessor, SplitRatios, SyntheticSpec,
    TaskKind,
};
use trc::diagnostics::{
    heavy_light_shift_oracle, noise_robustness_study, sve, ShiftOracleSettings, StudyRecipe,
};
use trc::harness::{run_experiment, wilcoxon_signed_rank, ExperimentConfig, Variant};
use trc::nn::{check_gradients, cross_entropy, mean_sq_l2, mse, Matrix, OptimHp};
use trc::rng::rng_from;
use trc::stats::standard_normal;
use trc::trc::{
    fit_shift_estimator, new_shift_estimator, orthogonality_backward, orthogonality_loss_value,
    shift_loss_value, train_trc, CorrectorConfig, CorrectorKind, LESpace, ShiftSimConfig,
    SimulatedShiftSet, TrcCorrector, TrcHp,
};
use trc::Error;

/// Print the verdict line for one checked behavior, then enforce it.
fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    if detail.is_empty() {
        println!("acceptance {id:02} {name}: {word}");
    } else {
        println!("acceptance {id:02} {name}: {word} ({detail})");
    }
    assert!(pass, "acceptance {id:02} {name}: {word} ({detail})");
}

/// Matrix of iid standard normals from a dedicated seed.
fn randn(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| standard_normal(&mut rng))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data length")
}

fn median_of(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

// ---------------------------------------------------------------------------
// 01 — every trainable composition agrees with central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_gradients_match_finite_differences() {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;

    // Plain MLP backbone with numeric and categorical columns, through the
    // regression loss: embeddings, body and original head together.
    {
        let ds = generate_synthetic(&SyntheticSpec {
            task: TaskKind::Regression,
            n: 24,
            d_num: 3,
            d_cat: 1,
            cat_cardinality: 3,
            noise_std: 0.1,
            seed: 11,
        })
        .expect("synthetic data");
        let cfg = BackboneConfig {
            architecture: Architecture::Mlp,
            depth: 1,
            width: 6,
            embed_dim: 2,
            seed: 3,
        };
        let mut bb = Backbone::new(&cfg, ds.schema(), ds.task()).expect("backbone");
        let x = ds.values().clone();
        let y = ds.labels_matrix();
        let report = check_gradients(
            &mut bb,
            |m| {
                let preds = m.forward_predictions(&x)?;
                let (loss, grad) = mse(&preds, &y)?;
                m.backward(&grad)?;
                Ok(loss)
            },
            |m| Ok(mse(&m.predict_eval(&x)?, &y)?.0),
            H,
        )
        .expect("gradient check");
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
    }

    // Residual backbone through the cross-entropy loss.
    {
        let ds = generate_synthetic(&SyntheticSpec {
            task: TaskKind::Multiclass(3),
            n: 24,
            d_num: 4,
            d_cat: 0,
            cat_cardinality: 2,
            noise_std: 0.1,
            seed: 12,
        })
        .expect("synthetic data");
        let cfg = BackboneConfig {
            architecture: Architecture::ResidualMlp,
            depth: 2,
            width: 5,
            embed_dim: 2,
            seed: 4,
        };
        let mut bb = Backbone::new(&cfg, ds.schema(), ds.task()).expect("backbone");
        let x = ds.values().clone();
        let y = ds.class_labels().expect("class labels");
        let report = check_gradients(
            &mut bb,
            |m| {
                let preds = m.forward_predictions(&x)?;
                let (loss, grad) = cross_entropy(&preds, &y)?;
                m.backward(&grad)?;
                Ok(loss)
            },
            |m| Ok(cross_entropy(&m.predict_eval(&x)?, &y)?.0),
            H,
        )
        .expect("gradient check");
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
    }

    // Shift estimator alone, through its drift-regression loss.
    {
        let mut phi = new_shift_estimator(5, 21);
        let set = SimulatedShiftSet {
            inputs: randn(16, 5, 31),
            targets: randn(16, 5, 32).map(|v| 0.3 * v),
            n_perturbed: 12,
        };
        let report = check_gradients(
            &mut phi,
            |m| {
                let preds = m.forward(&set.inputs)?;
                let (loss, grad) = mean_sq_l2(&preds, &set.targets)?;
                m.backward(&grad)?;
                Ok(loss)
            },
            |m| shift_loss_value(m, &set),
            H,
        )
        .expect("gradient check");
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
    }

    // Full corrector: re-estimation, coordinates, basis and fresh head in
    // one pass, with the weighted orthogonality penalty on top.
    {
        const W: f64 = 0.7;
        const T: usize = 4;
        let cfg = CorrectorConfig {
            repr_dim: 6,
            t: T,
            n_outputs: 2,
            kind: CorrectorKind::full(),
            seed: 9,
        };
        let mut corr = TrcCorrector::new(&cfg).expect("corrector");
        let z = randn(5, 6, 41);
        let y = randn(5, 2, 42);
        let report = check_gradients(
            &mut corr,
            |m| {
                let preds = m.forward_train(&z)?;
                let (loss, grad) = mean_sq_l2(&preds, &y)?;
                m.backward(&grad)?;
                let orth = orthogonality_backward(m.le_mut(), T, W)?;
                Ok(loss + W * orth)
            },
            |m| {
                let loss = mean_sq_l2(&m.predict_eval(&z)?, &y)?.0;
                let orth = orthogonality_loss_value(m.basis(), T)?;
                Ok(loss + W * orth)
            },
            H,
        )
        .expect("gradient check");
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
    }

    // Mapping-only corrector: the no-re-estimation routing.
    {
        let cfg = CorrectorConfig {
            repr_dim: 4,
            t: 3,
            n_outputs: 1,
            kind: CorrectorKind {
                use_reestimation: false,
                use_mapping: true,
                use_orth: true,
            },
            seed: 10,
        };
        let mut corr = TrcCorrector::new(&cfg).expect("corrector");
        let z = randn(6, 4, 51);
        let y = randn(6, 1, 52);
        let report = check_gradients(
            &mut corr,
            |m| {
                let preds = m.forward_train(&z)?;
                let (loss, grad) = mse(&preds, &y)?;
                m.backward(&grad)?;
                let orth = orthogonality_backward(m.le_mut(), 3, 1.0)?;
                Ok(loss + orth)
            },
            |m| {
                let loss = mse(&m.predict_eval(&z)?, &y)?.0;
                let orth = orthogonality_loss_value(m.basis(), 3)?;
                Ok(loss + orth)
            },
            H,
        )
        .expect("gradient check");
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
    }

    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        1,
        "gradients_match_finite_differences",
        worst < TOL && elapsed < 30.0,
        &format!("max rel err {worst:.2e} over {checked} params, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 02 — spectral entropy reproduces closed-form reference values.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_spectral_entropy_reference_values() {
    // Four equal singular values spread mass uniformly: entropy ln 4.
    let mut equal = Matrix::zeros(4, 4);
    for i in 0..4 {
        equal.set(i, i, 2.5);
    }
    let equal_sve = sve(&equal).expect("sve").sve;
    let ok_equal = (equal_sve - 4.0_f64.ln()).abs() < 1e-9;

    // A rank-one matrix concentrates all mass on one direction: entropy 0.
    let u = [1.5, -2.0, 0.5, 3.0];
    let v = [2.0, -1.0, 4.0];
    let mut rank_one = Matrix::zeros(4, 3);
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            rank_one.set(i, j, ui * vj);
        }
    }
    let rank_one_sve = sve(&rank_one).expect("sve").sve;
    let ok_rank_one = rank_one_sve < 1e-9;

    // Singular values (2, 1, 1) normalize to p = (1/2, 1/4, 1/4), whose
    // entropy is 1.5 ln 2 = 1.0397207708399179.
    let mut spread = Matrix::zeros(3, 3);
    spread.set(0, 0, 2.0);
    spread.set(1, 1, 1.0);
    spread.set(2, 2, 1.0);
    let spread_sve = sve(&spread).expect("sve").sve;
    let ok_spread = (spread_sve - 1.039_720_770_839_917_9).abs() < 1e-5;

    // The normalized spectrum ignores overall scale.
    let z = randn(8, 5, 77);
    let scaled = z.map(|v| 3.7 * v);
    let gap = (sve(&z).expect("sve").sve - sve(&scaled).expect("sve").sve).abs();
    let ok_scale = gap < 1e-12;

    verdict(
        2,
        "spectral_entropy_reference_values",
        ok_equal && ok_rank_one && ok_spread && ok_scale,
        &format!(
            "ln4 err {:.1e}, rank-one {rank_one_sve:.1e}, (2,1,1) err {:.1e}, scale gap {gap:.1e}",
            (equal_sve - 4.0_f64.ln()).abs(),
            (spread_sve - 1.039_720_770_839_917_9).abs(),
        ),
    );
}

// ---------------------------------------------------------------------------
// 03 — mapped representations can never exceed ln t of spectral entropy.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_mapped_representations_respect_entropy_cap() {
    const D: usize = 64;
    let mut states = 0usize;
    let mut worst_excess = f64::NEG_INFINITY;
    for (ti, &t) in [2usize, 5, 10].iter().enumerate() {
        for rep in 0..7 {
            let seed = 1_000 + (ti * 7 + rep) as u64;
            let cfg = CorrectorConfig {
                repr_dim: D,
                t,
                n_outputs: 1,
                kind: CorrectorKind::full(),
                seed,
            };
            let corr = TrcCorrector::new(&cfg).expect("corrector");
            // Vary the input scale as well as the corrector state.
            let scale = [0.5, 1.0, 20.0][rep % 3];
            let z = randn(40, D, seed ^ 0xabcd).map(|v| scale * v);
            let mapped = corr.corrected_eval(&z).expect("corrected representations");
            let report = sve(&mapped).expect("sve");
            worst_excess = worst_excess.max(report.sve - (t as f64).ln());
            states += 1;
        }
    }
    verdict(
        3,
        "mapped_representations_respect_entropy_cap",
        states == 21 && worst_excess <= 1e-9,
        &format!("{states} corrector states, worst sve - ln t = {worst_excess:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// 04 — orthogonality penalty: closed forms and gradient descent.
// ---------------------------------------------------------------------------

/// Mean absolute cosine over distinct row pairs.
fn mean_abs_off_diag_cos(basis: &Matrix) -> f64 {
    let t = basis.rows();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..t {
        for j in (i + 1)..t {
            let (mut dot, mut ni, mut nj) = (0.0, 0.0, 0.0);
            for (a, b) in basis.row(i).iter().zip(basis.row(j)) {
                dot += a * b;
                ni += a * a;
                nj += b * b;
            }
            total += (dot / (ni.sqrt() * nj.sqrt()).max(1e-12)).abs();
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn acceptance_04_orthogonality_closed_forms_and_descent() {
    // Orthogonal rows: every off-diagonal cosine is exactly zero, so the
    // loss sits at its floor S1/S2 + (S1 - t)^2 = t/t + 0 = 1.
    let orthogonal =
        Matrix::from_vec(2, 4, vec![2.0, 0.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0]).expect("basis");
    let at_floor = orthogonality_loss_value(&orthogonal, 2).expect("loss");
    let ok_floor = at_floor == 1.0;

    // Two identical rows whose norm is exactly representable (|(3,4)| = 5):
    // S1 = S2 = 4 and the loss is 4/4 + (4 - 2)^2 = 5, with no rounding.
    let identical = Matrix::from_vec(2, 2, vec![3.0, 4.0, 3.0, 4.0]).expect("basis");
    let collapsed = orthogonality_loss_value(&identical, 2).expect("loss");
    let ok_collapsed = collapsed == 5.0;

    // Plain gradient descent on the penalty decorrelates a random basis.
    let mut le = LESpace::new(5, 16, &mut rng_from(404)).expect("basis");
    let before = mean_abs_off_diag_cos(&le.basis.value);
    const LR: f64 = 1e-2;
    for _ in 0..200 {
        le.basis.zero_grad();
        orthogonality_backward(&mut le, 5, 1.0).expect("penalty gradient");
        let grad: Vec<f64> = le.basis.grad.data().to_vec();
        for (v, g) in le.basis.value.data_mut().iter_mut().zip(&grad) {
            *v -= LR * g;
        }
    }
    let after = mean_abs_off_diag_cos(&le.basis.value);
    let ok_descent = after < before;

    verdict(
        4,
        "orthogonality_closed_forms_and_descent",
        ok_floor && ok_collapsed && ok_descent,
        &format!("floor {at_floor}, collapsed {collapsed}, mean |cos| {before:.3} -> {after:.3}"),
    );
}

// ---------------------------------------------------------------------------
// 05 — the shift estimator learns a linear drift far below the zero baseline.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_shift_estimator_learns_linear_shift() {
    let started = Instant::now();
    const N: usize = 64;
    const D: usize = 6;
    let inputs = randn(N, D, 501);
    // Ground-truth drift: a fixed affine map of the representation.
    let w = randn(D, D, 502).map(|v| 0.4 * v);
    let b = randn(1, D, 503);
    let mut targets = inputs.matmul(&w).expect("targets");
    for r in 0..N {
        for c in 0..D {
            targets.set(r, c, targets.get(r, c) + b.get(0, c));
        }
    }
    let set = SimulatedShiftSet {
        inputs,
        targets,
        n_perturbed: N,
    };

    let zero_baseline = mean_sq_l2(&Matrix::zeros(N, D), &set.targets)
        .expect("baseline")
        .0;
    let mut phi = new_shift_estimator(D, 504);
    fit_shift_estimator(&mut phi, &set, 500, 16, &OptimHp::with_lr_wd(1e-2, 0.0))
        .expect("training");
    let trained = shift_loss_value(&phi, &set).expect("loss");

    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        5,
        "shift_estimator_learns_linear_shift",
        trained <= 0.5 * zero_baseline && elapsed < 60.0,
        &format!("loss {trained:.4} vs zero-predictor {zero_baseline:.4}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 06 — re-estimation pulls an under-trained backbone's representations
//      toward those of an identically initialized, longer-trained twin.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_shift_correction_closes_gap_to_heavier_training() {
    let started = Instant::now();
    let ds = generate_synthetic(&SyntheticSpec {
        task: TaskKind::Binary,
        n: 2000,
        d_num: 8,
        d_cat: 0,
        cat_cardinality: 4,
        noise_std: 0.1,
        seed: 601,
    })
    .expect("synthetic data");

    let mut wins = 0usize;
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        let settings = ShiftOracleSettings {
            backbone: BackboneConfig {
                architecture: Architecture::Mlp,
                depth: 2,
                width: 32,
                embed_dim: 8,
                seed,
            },
            ratios: SplitRatios::default(),
            preprocess: PreprocessMode::Quantile,
            optim: OptimHp::with_lr_wd(1e-4, 1e-5),
            batch: 128,
            epochs_light: 100,
            epochs_heavy: 200,
            tau: 0.25,
            // Gentle, local corruption: resample 10-30% of the feature
            // cells. Masking out most of a row instead would push the
            // simulated drift far beyond the light/heavy gap and make the
            // correction overshoot.
            sim: ShiftSimConfig {
                m: 3,
                eta_min: 0.1,
                eta_max: 0.3,
                mask_means_keep: false,
            },
            phi_epochs: 300,
            seed,
        };
        let out = heavy_light_shift_oracle(&ds, &settings).expect("oracle run");
        if out.dist_with < out.dist_without {
            wins += 1;
        }
        gaps.push(format!("{:.4}->{:.4}", out.dist_without, out.dist_with));
    }

    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        6,
        "shift_correction_closes_gap_to_heavier_training",
        wins >= 4 && elapsed < 300.0,
        &format!(
            "{wins}/5 seeds improved [{}], {elapsed:.0}s",
            gaps.join(", ")
        ),
    );
}

// ---------------------------------------------------------------------------
// 07 — on noisy-featured regression, full correction beats the frozen
//      baseline and is best-or-tied among its own ablations (median of 5
//      seeds).
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_correction_improves_noisy_regression() {
    let started = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    // A modestly-trained backbone (50 epochs at lr 1e-4) stands in for a
    // pretrained model whose frozen representations are still improvable;
    // the correctors get a generous budget on top of it. Simulated shifts
    // resample 10-30% of the feature cells per perturbation and are redrawn
    // each epoch so the shift estimator fits the corruption process rather
    // than one fixed draw.
    let cfg = ExperimentConfig {
        name: "noisy-regression".into(),
        out_dir: dir.path().to_path_buf(),
        task: TaskKind::Regression,
        synth_n: 2000,
        synth_d_num: 8,
        synth_noise_std: 0.1,
        train_noise_ratio: 0.2,
        lr: 1e-4,
        max_epochs: 50,
        patience: 60,
        trc_max_epochs: 400,
        tau: 0.25,
        t: 16,
        orth_weight: 1e-5,
        mask_means_keep: false,
        regen_shifts_per_epoch: true,
        seeds: vec![0, 1, 2, 3, 4],
        variants: Variant::all().to_vec(),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg).expect("experiment");

    let median = |v: Variant| {
        report
            .summaries
            .iter()
            .find(|s| s.variant == v)
            .map(|s| s.median_metric)
            .expect("variant summarized")
    };
    let base = median(Variant::Baseline);
    let full = median(Variant::Trc);
    let ablations = [
        Variant::TrOnly,
        Variant::ScOnly,
        Variant::TrSc,
        Variant::ScDe,
    ];
    let ok_base = full <= base;
    let ok_ablation = ablations.iter().all(|&v| full <= median(v));

    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "median rmse: baseline {base:.4}, full {full:.4}, tr_only {:.4}, sc_only {:.4}, \
         tr_sc {:.4}, sc_de {:.4}, deeper {:.4}, {elapsed:.0}s",
        median(Variant::TrOnly),
        median(Variant::ScOnly),
        median(Variant::TrSc),
        median(Variant::ScDe),
        median(Variant::DeeperBaseline),
    );
    verdict(
        7,
        "correction_improves_noisy_regression",
        ok_base && ok_ablation && elapsed < 600.0,
        &detail,
    );
}

// ---------------------------------------------------------------------------
// 08 — resampling half the training cells strictly degrades the test metric.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_training_noise_degrades_test_metric() {
    let ds = generate_synthetic(&SyntheticSpec {
        task: TaskKind::Regression,
        n: 1500,
        d_num: 8,
        d_cat: 0,
        cat_cardinality: 4,
        noise_std: 0.05,
        seed: 801,
    })
    .expect("synthetic data");
    let recipe = StudyRecipe {
        backbone: BackboneConfig {
            architecture: Architecture::Mlp,
            depth: 2,
            width: 32,
            embed_dim: 8,
            seed: 0,
        },
        train: TrainHp {
            optim: OptimHp::with_lr_wd(1e-3, 1e-5),
            batch: 128,
            patience: 20,
            max_epochs: 60,
            restore_best: true,
        },
        ratios: SplitRatios::default(),
        preprocess: PreprocessMode::Quantile,
    };
    let rows = noise_robustness_study(&ds, &recipe, &[0.0, 0.5], &[0, 1, 2, 3, 4]).expect("study");
    let at = |ratio: f64| {
        median_of(
            rows.iter()
                .filter(|r| r.ratio == ratio)
                .map(|r| r.metric)
                .collect(),
        )
    };
    let clean = at(0.0);
    let noisy = at(0.5);
    // RMSE: strictly higher is strictly worse.
    verdict(
        8,
        "training_noise_degrades_test_metric",
        noisy > clean,
        &format!("median rmse {clean:.4} clean vs {noisy:.4} at 50% resampling"),
    );
}

// ---------------------------------------------------------------------------
// 09 — the frozen backbone is bit-identical through corrector training and
//      rejects any further parameter updates.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_backbone_frozen_through_correction() {
    let ds = generate_synthetic(&SyntheticSpec {
        task: TaskKind::Regression,
        n: 400,
        d_num: 4,
        d_cat: 1,
        cat_cardinality: 3,
        noise_std: 0.1,
        seed: 901,
    })
    .expect("synthetic data");
    let raw = split_dataset(&ds, &SplitRatios::default(), 902).expect("split");
    let (_pre, split) = Preprocessor::fit_apply(&raw, PreprocessMode::ZScore).expect("preprocess");

    let cfg = BackboneConfig {
        architecture: Architecture::Mlp,
        depth: 1,
        width: 8,
        embed_dim: 4,
        seed: 903,
    };
    let mut bb = Backbone::new(&cfg, split.train.schema(), split.train.task()).expect("backbone");
    train_backbone(
        &mut bb,
        &split,
        &TrainHp {
            max_epochs: 10,
            ..TrainHp::default()
        },
    )
    .expect("pretraining");
    bb.freeze();

    let before = bb.param_checksum();
    let hp = TrcHp {
        tau: 0.2,
        t: 3,
        max_epochs: 5,
        optim: OptimHp::with_lr_wd(1e-3, 0.0),
        ..TrcHp::default()
    };
    train_trc(&mut bb, &split, &hp, CorrectorKind::full()).expect("corrector training");
    let after = bb.param_checksum();
    let ok_checksum = before == after;

    let ok_step = matches!(
        bb.optimizer_step(&OptimHp::default()),
        Err(Error::ModelState(_))
    );
    let ok_train = matches!(
        train_backbone(&mut bb, &split, &TrainHp::default()),
        Err(Error::ModelState(_))
    );

    verdict(
        9,
        "backbone_frozen_through_correction",
        ok_checksum && ok_step && ok_train,
        &format!("checksum {before:#018x} unchanged, further updates rejected"),
    );
}

// ---------------------------------------------------------------------------
// 10 — exact signed-rank p-values match full enumeration of sign patterns.
// ---------------------------------------------------------------------------

/// Tie-averaged ranks of |d| in doubled units, so every rank is an integer.
fn doubled_tied_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| {
        diffs[a]
            .abs()
            .partial_cmp(&diffs[b].abs())
            .expect("finite differences")
    });
    let mut ranks = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && diffs[order[j]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // Positions i..j (0-based) share the average of ranks i+1..=j, whose
        // doubled value is the integer (i + 1) + j.
        let doubled = (i + 1 + j) as u64;
        for &idx in &order[i..j] {
            ranks[idx] = doubled;
        }
        i = j;
    }
    ranks
}

/// P(W+ >= observed) by brute force over all 2^n sign assignments.
fn enumerated_p(diffs: &[f64]) -> f64 {
    let ranks = doubled_tied_ranks(diffs);
    let w_obs: u64 = ranks
        .iter()
        .zip(diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let n = diffs.len();
    let favorable = (0u64..1 << n)
        .filter(|signs| {
            let w: u64 = (0..n)
                .filter(|&i| signs >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            w >= w_obs
        })
        .count();
    favorable as f64 / (1u64 << n) as f64
}

#[test]
fn acceptance_10_wilcoxon_matches_enumeration() {
    let mut rng = rng_from(1009);
    let mut max_err = 0.0_f64;
    let mut all_exact = true;
    for _ in 0..100 {
        let n: usize = rng.gen_range(5..=12);
        let diffs: Vec<f64> = (0..n)
            .map(|_| {
                // Small integer magnitudes force plenty of rank ties.
                let magnitude = rng.gen_range(1..=5) as f64;
                if rng.gen_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let pairs: Vec<(f64, f64)> = diffs.iter().map(|&d| (d, 0.0)).collect();
        let result = wilcoxon_signed_rank(&pairs).expect("test statistic");
        all_exact &= result.exact;
        max_err = max_err.max((result.p_value - enumerated_p(&diffs)).abs());
    }
    let ok_trials = all_exact && max_err < 1e-12;

    // Five concordant pairs: only 1 of 32 sign patterns reaches W+ = 15.
    let five: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 0.0)).collect();
    let r5 = wilcoxon_signed_rank(&five).expect("test statistic");
    let ok_five = r5.p_value == 0.03125 && r5.exact;

    verdict(
        10,
        "wilcoxon_matches_enumeration",
        ok_trials && ok_five,
        &format!(
            "max |p - enumerated| = {max_err:.2e} over 100 trials, p5 = {}",
            r5.p_value
        ),
    );
}

// ---------------------------------------------------------------------------
// 11 — identical configuration and seeds reproduce every metric bit-for-bit.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_11_experiment_reruns_bit_identical() {
    let base = ExperimentConfig {
        name: "determinism".into(),
        synth_n: 300,
        synth_d_num: 4,
        width: 8,
        depth: 1,
        embed_dim: 4,
        t: 3,
        tau: 0.2,
        lr: 1e-2,
        max_epochs: 6,
        patience: 3,
        trc_max_epochs: 4,
        seeds: vec![0, 1],
        variants: vec![Variant::Baseline, Variant::Trc, Variant::ScOnly],
        ..ExperimentConfig::default()
    };
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    let run_a = run_experiment(&ExperimentConfig {
        out_dir: dir_a.path().to_path_buf(),
        ..base.clone()
    })
    .expect("first run");
    let run_b = run_experiment(&ExperimentConfig {
        out_dir: dir_b.path().to_path_buf(),
        ..base
    })
    .expect("second run");

    // `seconds` is wall-clock timing and deliberately exempt; every metric
    // field must match to the last bit.
    let ok_rows = run_a.rows.len() == run_b.rows.len()
        && run_a.rows.iter().zip(&run_b.rows).all(|(a, b)| {
            a.variant == b.variant
                && a.seed == b.seed
                && a.metric.to_bits() == b.metric.to_bits()
                && a.sve.to_bits() == b.sve.to_bits()
        });
    let ok_summaries = run_a.summaries.len() == run_b.summaries.len()
        && run_a.summaries.iter().zip(&run_b.summaries).all(|(a, b)| {
            a.variant == b.variant
                && a.mean_metric.to_bits() == b.mean_metric.to_bits()
                && a.std_metric.to_bits() == b.std_metric.to_bits()
                && a.median_metric.to_bits() == b.median_metric.to_bits()
                && a.mean_sve.to_bits() == b.mean_sve.to_bits()
        });
    let ok_wilcoxon = match (&run_a.wilcoxon, &run_b.wilcoxon) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            a.statistic.to_bits() == b.statistic.to_bits()
                && a.p_value.to_bits() == b.p_value.to_bits()
                && a.n_used == b.n_used
                && a.exact == b.exact
        }
        _ => false,
    };

    verdict(
        11,
        "experiment_reruns_bit_identical",
        ok_rows && ok_summaries && ok_wilcoxon,
        &format!("{} rows compared", run_a.rows.len()),
    );
}

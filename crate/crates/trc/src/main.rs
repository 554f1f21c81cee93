//! Command-line surface of the lab.
//!
//! Every experiment-config key is exposed both as a JSON file key
//! (`--config`) and as a long flag of the same name, with flags winning.
//! Subcommands either run training/evaluation for a single seed
//! (`train-backbone`, `train-trc`, `evaluate`), compute diagnostics
//! (`diagnose`), or orchestrate a full multi-seed experiment (`report`,
//! `ablate`). Machine-readable results go to stdout as JSON; progress and
//! warnings go to stderr via the logger.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 runtime error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use trc::backbone::{load_backbone, save_backbone, train_backbone, validation_metric, Backbone};
use trc::data::{Dataset, Preprocessor, Split};
use trc::diagnostics::{
    heavy_light_shift_oracle, noise_robustness_study, noise_study_means, per_sample_grad_norms,
    sve, write_noise_study_csv, ShiftOracleSettings, StudyRecipe,
};
use trc::harness::{
    load_config, metric_name, prepare_seed_split, raw_seed_split, run_experiment, ExperimentConfig,
    Report, Variant,
};
use trc::nn::Matrix;
use trc::rng::derive_seed;
use trc::trc::{corrected_representations, infer_trc, load_corrector, save_corrector, train_trc};
use trc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "trc",
    version,
    about = "Tabular representation-correction lab",
    long_about = "Train small tabular backbones, freeze them, and correct their \
                  representations instead of retraining. Experiments are driven by a \
                  JSON config; every config key is also available as a flag."
)]
struct Cli {
    /// JSON experiment config; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One optional flag per experiment-config key; present flags override the
/// config file. List-valued keys take comma-separated values.
#[derive(Args)]
struct Overrides {
    /// Experiment name; artifacts land under `<out-dir>/<name>/`.
    #[arg(long, global = true)]
    name: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Data source: `synthetic` or `csv`.
    #[arg(long, global = true)]
    dataset: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    csv_path: Option<PathBuf>,
    /// Label column for CSV data.
    #[arg(long, global = true)]
    csv_label: Option<String>,
    /// JSON schema file pinning CSV column kinds.
    #[arg(long, global = true, value_name = "FILE")]
    csv_schema: Option<PathBuf>,
    /// `regression`, `binary`, or `{"multiclass": K}`.
    #[arg(long, global = true)]
    task: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    synth_n: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    synth_d_num: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    synth_d_cat: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    synth_cat_cardinality: Option<usize>,
    #[arg(long, global = true, value_name = "STD")]
    synth_noise_std: Option<f64>,
    #[arg(long, global = true, value_name = "SEED")]
    synth_seed: Option<u64>,
    /// Feature scaling: `z_score` or `quantile`.
    #[arg(long, global = true)]
    preprocess: Option<String>,
    #[arg(long, global = true, value_name = "FRAC")]
    ratio_train: Option<f64>,
    #[arg(long, global = true, value_name = "FRAC")]
    ratio_val: Option<f64>,
    #[arg(long, global = true, value_name = "FRAC")]
    ratio_test: Option<f64>,
    /// Backbone architecture: `mlp` or `residual_mlp`.
    #[arg(long, global = true)]
    arch: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    depth: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    width: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    embed_dim: Option<usize>,
    #[arg(long, global = true, value_name = "LR")]
    lr: Option<f64>,
    #[arg(long, global = true, value_name = "WD")]
    wd: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    batch: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    patience: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    max_epochs: Option<usize>,
    /// Corrector epoch budget (backbone budget is --max-epochs).
    #[arg(long, global = true, value_name = "N")]
    trc_max_epochs: Option<usize>,
    /// Fraction of the diagnosed split kept as anchors.
    #[arg(long, global = true, value_name = "FRAC")]
    tau: Option<f64>,
    /// Distinct corruption masks per anchor.
    #[arg(long, global = true, value_name = "N")]
    m: Option<usize>,
    #[arg(long, global = true, value_name = "FRAC")]
    eta_min: Option<f64>,
    #[arg(long, global = true, value_name = "FRAC")]
    eta_max: Option<f64>,
    /// Light-embedding basis size.
    #[arg(long, global = true, value_name = "N")]
    t: Option<usize>,
    #[arg(long, global = true, value_name = "W")]
    orth_weight: Option<f64>,
    /// Whether mask=1 means "keep the original cell".
    #[arg(long, global = true, value_name = "BOOL")]
    mask_means_keep: Option<bool>,
    /// Anchor source: `val` or `train_slice`.
    #[arg(long, global = true)]
    optimal_source: Option<String>,
    #[arg(long, global = true, value_name = "BOOL")]
    regen_shifts_per_epoch: Option<bool>,
    /// Comma-separated seed list, e.g. `--seeds 0,1,2`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "SEEDS")]
    seeds: Option<Vec<u64>>,
    /// Comma-separated variant list, e.g. `--variants baseline,trc`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "VARIANTS")]
    variants: Option<Vec<String>>,
    /// Fraction of cells masked in every split and imputed from train stats.
    #[arg(long, global = true, value_name = "FRAC")]
    missing_ratio: Option<f64>,
    /// Fraction of training cells resampled from their marginals.
    #[arg(long, global = true, value_name = "FRAC")]
    train_noise_ratio: Option<f64>,
}

impl Overrides {
    /// Render the present flags as `key=json` pairs for the config loader.
    fn to_sets(&self) -> Vec<String> {
        fn quoted(v: &impl Serialize) -> String {
            serde_json::to_string(v).expect("flag values serialize")
        }
        let mut out = Vec::new();
        // Values with JSON-expressible types are serialized; enum selectors
        // pass through raw so both `binary` and `{"multiclass":3}` work.
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    out.push(format!(concat!(stringify!($field), "={}"), quoted(v)));
                }
            };
        }
        macro_rules! raw {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    out.push(format!(concat!(stringify!($field), "={}"), v));
                }
            };
        }
        set!(name);
        set!(out_dir);
        raw!(dataset);
        set!(csv_path);
        set!(csv_label);
        set!(csv_schema);
        raw!(task);
        set!(synth_n);
        set!(synth_d_num);
        set!(synth_d_cat);
        set!(synth_cat_cardinality);
        set!(synth_noise_std);
        set!(synth_seed);
        raw!(preprocess);
        set!(ratio_train);
        set!(ratio_val);
        set!(ratio_test);
        raw!(arch);
        set!(depth);
        set!(width);
        set!(embed_dim);
        set!(lr);
        set!(wd);
        set!(batch);
        set!(patience);
        set!(max_epochs);
        set!(trc_max_epochs);
        set!(tau);
        set!(m);
        set!(eta_min);
        set!(eta_max);
        set!(t);
        set!(orth_weight);
        set!(mask_means_keep);
        raw!(optimal_source);
        set!(regen_shifts_per_epoch);
        set!(seeds);
        set!(variants);
        set!(missing_ratio);
        set!(train_noise_ratio);
        out
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one backbone for a seed, freeze it, and write its checkpoint.
    TrainBackbone {
        /// Seed to run; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a corrector on an existing frozen-backbone checkpoint.
    TrainTrc {
        #[arg(long)]
        seed: Option<u64>,
        /// Corrector variant: trc, tr_only, sc_only, tr_sc, or sc_de.
        #[arg(long, default_value = "trc")]
        variant: String,
    },
    /// Score a previously trained variant on the test split.
    Evaluate {
        #[arg(long)]
        seed: Option<u64>,
        /// baseline, trc, tr_only, sc_only, tr_sc, or sc_de.
        #[arg(long, default_value = "baseline")]
        variant: String,
    },
    /// Representation and training-signal diagnostics.
    #[command(subcommand)]
    Diagnose(Diagnose),
    /// Run the full variant grid (baseline, corrections, ablations).
    Ablate,
    /// Run the configured experiment and print its report.
    Report,
}

#[derive(Subcommand)]
enum Diagnose {
    /// Singular-value entropy of a representation matrix.
    Sve {
        /// CSV of representations, one row per sample (header optional).
        #[arg(long, value_name = "FILE")]
        reps: PathBuf,
    },
    /// Per-sample gradient norms of a trained backbone.
    GradNorms {
        #[arg(long)]
        seed: Option<u64>,
        /// Which split to diagnose.
        #[arg(long, value_enum, default_value_t = SplitPart::Val)]
        split: SplitPart,
        /// Inner exponent of the (p, q) norm.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Outer exponent of the (p, q) norm.
        #[arg(long, default_value_t = 1.0)]
        q: f64,
    },
    /// Backbone test metric as a function of training-noise ratio.
    NoiseStudy {
        /// Comma-separated noise ratios, e.g. `--ratios 0.0,0.25,0.5`.
        #[arg(long, value_delimiter = ',', required = true, value_name = "RATIOS")]
        ratios: Vec<f64>,
        /// Also write the per-run rows as `ratio,seed,metric` CSV.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Ground-truth shift-estimation check against a longer-trained twin.
    ShiftOracle {
        #[arg(long)]
        seed: Option<u64>,
        /// Epoch budget of the under-trained twin.
        #[arg(long, default_value_t = 50)]
        light: usize,
        /// Epoch budget of the reference twin.
        #[arg(long, default_value_t = 200)]
        heavy: usize,
        /// Epochs for fitting the shift estimator.
        #[arg(long, default_value_t = 300)]
        phi_epochs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitPart {
    Train,
    Val,
    Test,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the same error path;
            // those are successes, everything else is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Config(_) => 1,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides.to_sets())?;
    match cli.command {
        Command::TrainBackbone { seed } => cmd_train_backbone(&cfg, seed),
        Command::TrainTrc { seed, variant } => cmd_train_trc(&cfg, seed, &variant),
        Command::Evaluate { seed, variant } => cmd_evaluate(&cfg, seed, &variant),
        Command::Diagnose(Diagnose::Sve { reps }) => cmd_sve(&reps),
        Command::Diagnose(Diagnose::GradNorms { seed, split, p, q }) => {
            cmd_grad_norms(&cfg, seed, split, p, q)
        }
        Command::Diagnose(Diagnose::NoiseStudy { ratios, out }) => {
            cmd_noise_study(&cfg, &ratios, out.as_deref())
        }
        Command::Diagnose(Diagnose::ShiftOracle {
            seed,
            light,
            heavy,
            phi_epochs,
        }) => cmd_shift_oracle(&cfg, seed, light, heavy, phi_epochs),
        Command::Ablate => {
            let mut cfg = cfg;
            cfg.variants = Variant::all().to_vec();
            cmd_report(&cfg)
        }
        Command::Report => cmd_report(&cfg),
    }
}

fn pick_seed(cfg: &ExperimentConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(cfg.seeds[0])
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.run_dir().join(format!("seed{seed}"))
}

fn parse_variant(s: &str) -> Result<Variant> {
    s.parse()
}

fn print_json(value: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("results serialize")
    );
}

/// Load a backbone checkpoint together with the seed's treated-but-raw
/// split, then preprocess the split with the *stored* preprocessor so
/// evaluation matches training exactly.
fn load_backbone_for_seed(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    seed: u64,
) -> Result<(Backbone, Preprocessor, Split)> {
    let raw = raw_seed_split(cfg, ds, seed)?;
    let path = seed_dir(cfg, seed).join("backbone.ckpt");
    let (bb, pre) = load_backbone(&path, Some(raw.train.schema()))?;
    let split = pre.apply_split(&raw)?;
    Ok((bb, pre, split))
}

fn cmd_train_backbone(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let seed = pick_seed(cfg, seed);
    let (pre, split) = prepare_seed_split(cfg, &ds, seed)?;
    let bb_cfg = cfg.backbone_config(derive_seed(seed, "backbone"));
    let mut bb = Backbone::new(&bb_cfg, split.train.schema(), ds.task())?;
    let log = train_backbone(&mut bb, &split, &cfg.train_hp())?;
    bb.freeze();
    let path = seed_dir(cfg, seed).join("backbone.ckpt");
    save_backbone(&path, &bb, &pre)?;
    print_json(&json!({
        "checkpoint": path,
        "seed": seed,
        "epochs_run": log.epochs.len(),
        "best_epoch": log.best_epoch,
        "early_stopped": log.early_stopped,
        "val_metric": validation_metric(&bb, &split.val)?,
    }));
    Ok(())
}

fn cmd_train_trc(cfg: &ExperimentConfig, seed: Option<u64>, variant: &str) -> Result<()> {
    let variant = parse_variant(variant)?;
    let kind = variant.corrector_kind().ok_or_else(|| {
        Error::Config(format!("variant '{}' trains no corrector", variant.label()))
    })?;
    let ds = cfg.load_dataset()?;
    let seed = pick_seed(cfg, seed);
    let (mut bb, _pre, split) = load_backbone_for_seed(cfg, &ds, seed)?;
    bb.freeze();
    let hp = cfg.trc_hp(derive_seed(seed, "trc"));
    let (corr, log) = train_trc(&mut bb, &split, &hp, kind)?;
    let path = seed_dir(cfg, seed).join(format!("{}.ckpt", variant.label()));
    save_corrector(&path, &corr, &bb)?;
    print_json(&json!({
        "checkpoint": path,
        "seed": seed,
        "variant": variant.label(),
        "n_anchors": log.n_anchors,
        "epochs_run": log.epochs.len(),
        "best_epoch": log.best_epoch,
        "early_stopped": log.early_stopped,
        "val_metric": log.best_epoch.map(|e| log.epochs[e].val_metric),
    }));
    Ok(())
}

fn cmd_evaluate(cfg: &ExperimentConfig, seed: Option<u64>, variant: &str) -> Result<()> {
    let variant = parse_variant(variant)?;
    if variant == Variant::DeeperBaseline {
        return Err(Error::Config(
            "deeper_baseline keeps no checkpoint; run it via 'report' or 'ablate'".into(),
        ));
    }
    let ds = cfg.load_dataset()?;
    let seed = pick_seed(cfg, seed);
    let (bb, pre, split) = load_backbone_for_seed(cfg, &ds, seed)?;
    let test = split.test.values();
    let (preds, reprs) = match variant.corrector_kind() {
        None => (bb.predict_eval(test)?, bb.repr_eval(test)?),
        Some(_) => {
            let path = seed_dir(cfg, seed).join(format!("{}.ckpt", variant.label()));
            let corr = load_corrector(&path, &bb)?;
            (
                infer_trc(&bb, &corr, test)?,
                corrected_representations(&bb, &corr, test)?,
            )
        }
    };
    let metric = trc::backbone::evaluate(&preds, split.test.labels(), ds.task(), Some(&pre))?;
    let spectrum = sve(&reprs)?;
    print_json(&json!({
        "variant": variant.label(),
        "seed": seed,
        "metric_name": metric_name(ds.task()),
        "metric": metric,
        "sve": spectrum.sve,
        "effective_rank": spectrum.effective_rank,
    }));
    Ok(())
}

/// Read a numeric matrix from CSV, tolerating one leading header row.
fn load_matrix_csv(path: &Path) -> Result<Matrix> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: Box::new(e),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let parse_row = |rec: &csv::StringRecord| -> std::result::Result<Vec<f64>, usize> {
        rec.iter()
            .enumerate()
            .map(|(j, cell)| cell.parse::<f64>().map_err(|_| j))
            .collect()
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        match parse_row(&rec) {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => {} // header row
            Err(j) => {
                return Err(Error::Ingestion {
                    row: i + 1,
                    column: format!("{}", j + 1),
                    message: format!("'{}' is not a number", rec.get(j).unwrap_or("")),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no numeric rows",
            path.display()
        )));
    }
    Matrix::from_rows(&rows)
}

fn cmd_sve(reps: &Path) -> Result<()> {
    let m = load_matrix_csv(reps)?;
    print_json(&sve(&m)?);
    Ok(())
}

fn cmd_grad_norms(
    cfg: &ExperimentConfig,
    seed: Option<u64>,
    part: SplitPart,
    p: f64,
    q: f64,
) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let seed = pick_seed(cfg, seed);
    let (mut bb, _pre, split) = load_backbone_for_seed(cfg, &ds, seed)?;
    let part = match part {
        SplitPart::Train => &split.train,
        SplitPart::Val => &split.val,
        SplitPart::Test => &split.test,
    };
    let table = per_sample_grad_norms(&mut bb, part, p, q)?;
    print_json(&table);
    Ok(())
}

fn cmd_noise_study(cfg: &ExperimentConfig, ratios: &[f64], out: Option<&Path>) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let recipe = StudyRecipe {
        backbone: cfg.backbone_config(0),
        train: cfg.train_hp(),
        ratios: cfg.ratios(),
        preprocess: cfg.preprocess,
    };
    let rows = noise_robustness_study(&ds, &recipe, ratios, &cfg.seeds)?;
    if let Some(path) = out {
        write_noise_study_csv(&rows, path)?;
    }
    let means: Vec<_> = noise_study_means(&rows)
        .into_iter()
        .map(|(ratio, mean)| json!({"ratio": ratio, "mean_metric": mean}))
        .collect();
    print_json(&json!({
        "metric_name": metric_name(ds.task()),
        "rows": rows,
        "means": means,
    }));
    Ok(())
}

fn cmd_shift_oracle(
    cfg: &ExperimentConfig,
    seed: Option<u64>,
    light: usize,
    heavy: usize,
    phi_epochs: usize,
) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let seed = pick_seed(cfg, seed);
    let settings = ShiftOracleSettings {
        backbone: cfg.backbone_config(seed),
        ratios: cfg.ratios(),
        preprocess: cfg.preprocess,
        optim: cfg.train_hp().optim,
        batch: cfg.batch,
        epochs_light: light,
        epochs_heavy: heavy,
        tau: cfg.tau,
        sim: cfg.trc_hp(seed).sim,
        phi_epochs,
        seed,
    };
    let outcome = heavy_light_shift_oracle(&ds, &settings)?;
    print_json(&outcome);
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig) -> Result<()> {
    let report = run_experiment(cfg)?;
    print_report(&report, &cfg.run_dir());
    Ok(())
}

fn print_report(report: &Report, dir: &Path) {
    let seeds: BTreeSet<u64> = report.rows.iter().map(|r| r.seed).collect();
    println!(
        "experiment '{}' — {} seed(s), metric: {}",
        report.name,
        seeds.len(),
        report.metric_name
    );
    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>10}",
        "variant", "mean", "std", "median", "mean_sve"
    );
    for s in &report.summaries {
        println!(
            "{:<16} {:>12.4} {:>12.4} {:>12.4} {:>10.4}",
            s.variant.label(),
            s.mean_metric,
            s.std_metric,
            s.median_metric,
            s.mean_sve
        );
    }
    match &report.wilcoxon {
        Some(w) => println!(
            "wilcoxon baseline vs trc: W = {}, one-sided p = {:.5} ({}, n = {})",
            w.statistic,
            w.p_value,
            if w.exact { "exact" } else { "normal approx" },
            w.n_used
        ),
        None => println!("wilcoxon baseline vs trc: not reported (needs >= 6 matched pairs)"),
    }
    println!("artifacts: {}", dir.display());
}

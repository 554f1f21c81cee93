//! Experiment configuration: one flat JSON object covering data source,
//! preprocessing, backbone, corrector and run matrix. Unknown keys are
//! rejected so typos fail loudly; every field has a default so a config
//! file only states what it changes.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{Architecture, BackboneConfig, TrainHp};
use crate::data::csv_io::{load_csv, CsvOptions, SchemaFile};
use crate::data::dataset::{Dataset, TaskKind};
use crate::data::preprocess::PreprocessMode;
use crate::data::split::SplitRatios;
use crate::data::synthetic::{generate_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::nn::optim::OptimHp;
use crate::trc::{CorrectorKind, OptimalSource, ShiftSimConfig, TrcHp};

/// One experimental arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Trained backbone, original head, no correction.
    Baseline,
    /// Full correction: re-estimation + mapping + orthogonality.
    Trc,
    /// Re-estimation only.
    TrOnly,
    /// Mapping only.
    ScOnly,
    /// Re-estimation + mapping, no orthogonality penalty.
    TrSc,
    /// Mapping + orthogonality, no re-estimation.
    ScDe,
    /// Uncorrected baseline with three extra body blocks.
    DeeperBaseline,
}

impl Variant {
    /// All variants, in ablation-grid order.
    pub fn all() -> [Variant; 7] {
        [
            Variant::Baseline,
            Variant::Trc,
            Variant::TrOnly,
            Variant::ScOnly,
            Variant::TrSc,
            Variant::ScDe,
            Variant::DeeperBaseline,
        ]
    }

    /// Corrector routing for this variant; `None` for uncorrected baselines.
    pub fn corrector_kind(&self) -> Option<CorrectorKind> {
        let kind = |re, map, orth| CorrectorKind {
            use_reestimation: re,
            use_mapping: map,
            use_orth: orth,
        };
        match self {
            Variant::Baseline | Variant::DeeperBaseline => None,
            Variant::Trc => Some(kind(true, true, true)),
            Variant::TrOnly => Some(kind(true, false, false)),
            Variant::ScOnly => Some(kind(false, true, false)),
            Variant::TrSc => Some(kind(true, true, false)),
            Variant::ScDe => Some(kind(false, true, true)),
        }
    }

    /// Stable snake_case label used in CSV rows and artifact paths.
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Trc => "trc",
            Variant::TrOnly => "tr_only",
            Variant::ScOnly => "sc_only",
            Variant::TrSc => "tr_sc",
            Variant::ScDe => "sc_de",
            Variant::DeeperBaseline => "deeper_baseline",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Experiment name; artifacts land under `<out_dir>/<name>/`.
    pub name: String,
    pub out_dir: PathBuf,

    pub dataset: DatasetKind,
    pub csv_path: Option<PathBuf>,
    /// Label column for CSV data (falls back to the schema file's choice).
    pub csv_label: Option<String>,
    /// Optional JSON schema file pinning CSV column kinds.
    pub csv_schema: Option<PathBuf>,
    pub task: TaskKind,

    pub synth_n: usize,
    pub synth_d_num: usize,
    pub synth_d_cat: usize,
    pub synth_cat_cardinality: usize,
    pub synth_noise_std: f64,
    pub synth_seed: u64,

    pub preprocess: PreprocessMode,
    pub ratio_train: f64,
    pub ratio_val: f64,
    pub ratio_test: f64,

    pub arch: Architecture,
    pub depth: usize,
    pub width: usize,
    pub embed_dim: usize,

    pub lr: f64,
    pub wd: f64,
    pub batch: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Corrector epoch budget (backbone budget is `max_epochs`).
    pub trc_max_epochs: usize,

    pub tau: f64,
    pub m: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub t: usize,
    pub orth_weight: f64,
    pub mask_means_keep: bool,
    pub optimal_source: OptimalSource,
    pub regen_shifts_per_epoch: bool,

    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,

    /// Fraction of feature cells masked in every split and imputed from
    /// training statistics.
    pub missing_ratio: f64,
    /// Fraction of *training* feature cells resampled from their marginals
    /// before preprocessing.
    pub train_noise_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            out_dir: PathBuf::from("runs"),
            dataset: DatasetKind::Synthetic,
            csv_path: None,
            csv_label: None,
            csv_schema: None,
            task: TaskKind::Regression,
            synth_n: 2000,
            synth_d_num: 8,
            synth_d_cat: 0,
            synth_cat_cardinality: 4,
            synth_noise_std: 0.1,
            synth_seed: 7,
            preprocess: PreprocessMode::Quantile,
            ratio_train: 0.6,
            ratio_val: 0.2,
            ratio_test: 0.2,
            arch: Architecture::Mlp,
            depth: 2,
            width: 32,
            embed_dim: 8,
            lr: 1e-4,
            wd: 1e-5,
            batch: 128,
            patience: 10,
            max_epochs: 200,
            trc_max_epochs: 100,
            tau: 0.01,
            m: 3,
            eta_min: 0.1,
            eta_max: 0.3,
            t: 10,
            orth_weight: 1.0,
            mask_means_keep: true,
            optimal_source: OptimalSource::Val,
            regen_shifts_per_epoch: false,
            seeds: vec![0, 1, 2, 3, 4],
            variants: vec![Variant::Baseline, Variant::Trc],
            missing_ratio: 0.0,
            train_noise_ratio: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || self.name.contains(['/', '\\'])
            || self.name == "."
            || self.name == ".."
        {
            return Err(Error::Config(format!(
                "experiment name '{}' must be a plain directory name",
                self.name
            )));
        }
        if self.dataset == DatasetKind::Csv && self.csv_path.is_none() {
            return Err(Error::Config("csv dataset needs csv_path".into()));
        }
        self.ratios().validate()?;
        self.backbone_config(0).validate()?;
        if self.lr <= 0.0 || self.wd < 0.0 {
            return Err(Error::Config(
                "lr must be positive and wd nonnegative".into(),
            ));
        }
        if self.t < 2 {
            return Err(Error::Config(
                "t must be at least 2: a single basis direction collapses every \
                 representation to one point"
                    .into(),
            ));
        }
        self.trc_hp(0).validate().map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        })?;
        if self.batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("need at least one variant".into()));
        }
        let mut vs = self.variants.clone();
        vs.sort_by_key(|v| v.label());
        vs.dedup();
        if vs.len() != self.variants.len() {
            return Err(Error::Config("duplicate variants".into()));
        }
        if !(0.0..1.0).contains(&self.missing_ratio) {
            return Err(Error::Config("missing_ratio must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.train_noise_ratio) {
            return Err(Error::Config("train_noise_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.ratio_train,
            val: self.ratio_val,
            test: self.ratio_test,
        }
    }

    pub fn backbone_config(&self, seed: u64) -> BackboneConfig {
        BackboneConfig {
            architecture: self.arch,
            depth: self.depth,
            width: self.width,
            embed_dim: self.embed_dim,
            seed,
        }
    }

    pub fn train_hp(&self) -> TrainHp {
        TrainHp {
            optim: OptimHp::with_lr_wd(self.lr, self.wd),
            batch: self.batch,
            patience: self.patience,
            max_epochs: self.max_epochs,
            restore_best: true,
        }
    }

    pub fn trc_hp(&self, seed: u64) -> TrcHp {
        TrcHp {
            tau: self.tau,
            sim: ShiftSimConfig {
                m: self.m,
                eta_min: self.eta_min,
                eta_max: self.eta_max,
                mask_means_keep: self.mask_means_keep,
            },
            t: self.t,
            orth_weight: self.orth_weight,
            optimal_source: self.optimal_source,
            regen_shifts_per_epoch: self.regen_shifts_per_epoch,
            optim: OptimHp::with_lr_wd(self.lr, self.wd),
            batch: self.batch,
            patience: self.patience,
            max_epochs: self.trc_max_epochs,
            seed,
        }
    }

    /// Materialize the configured dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match self.dataset {
            DatasetKind::Synthetic => generate_synthetic(&SyntheticSpec {
                task: self.task,
                n: self.synth_n,
                d_num: self.synth_d_num,
                d_cat: self.synth_d_cat,
                cat_cardinality: self.synth_cat_cardinality,
                noise_std: self.synth_noise_std,
                seed: self.synth_seed,
            }),
            DatasetKind::Csv => {
                let path = self
                    .csv_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("csv dataset needs csv_path".into()))?;
                let schema = match &self.csv_schema {
                    Some(p) => Some(SchemaFile::from_path(p)?),
                    None => None,
                };
                load_csv(
                    path,
                    &CsvOptions {
                        label: self.csv_label.clone(),
                        schema,
                        task: Some(self.task),
                    },
                )
            }
        }
    }

    /// Directory receiving this experiment's artifacts.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }
}

/// Load a config file (or the defaults when `path` is `None`) and apply
/// `key=value` overrides. Values parse as JSON when possible, otherwise as
/// strings, so `--set width=64` and `--set name=wide` both work.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("config {} is not valid JSON: {e}", p.display()))
            })?
        }
        None => {
            serde_json::to_value(ExperimentConfig::default()).expect("default config serializes")
        }
    };
    apply_overrides(&mut value, overrides)?;
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(value: &mut serde_json::Value, sets: &[String]) -> Result<()> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Config("config root must be a JSON object".into()))?;
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{s}' must be KEY=VALUE")))?;
        let parsed = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        obj.insert(key.to_string(), parsed);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.seeds, cfg.seeds);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"wdith": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn overrides_replace_fields_with_parsed_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"width": 16}"#).unwrap();
        let cfg = load_config(
            Some(&path),
            &[
                "width=64".into(),
                "seeds=[7,8]".into(),
                "name=custom".into(),
                "variants=[\"baseline\",\"sc_only\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.width, 64);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.name, "custom");
        assert_eq!(cfg.variants, vec![Variant::Baseline, Variant::ScOnly]);
    }

    #[test]
    fn missing_config_file_reports_the_path() {
        let err = load_config(Some(Path::new("/nonexistent/cfg.json")), &[]).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("/nonexistent/cfg.json")),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let bad = |sets: &[&str]| {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            load_config(None, &sets).unwrap_err()
        };
        assert!(matches!(bad(&["t=1"]), Error::Config(_)));
        assert!(matches!(bad(&["seeds=[]"]), Error::Config(_)));
        assert!(matches!(bad(&["seeds=[1,1]"]), Error::Config(_)));
        assert!(matches!(bad(&["name=a/b"]), Error::Config(_)));
        assert!(matches!(bad(&["missing_ratio=1.0"]), Error::Config(_)));
        assert!(matches!(bad(&["dataset=\"csv\""]), Error::Config(_)));
    }

    #[test]
    fn variant_labels_match_their_serde_names() {
        for v in Variant::all() {
            let json = serde_json::to_value(v).unwrap();
            assert_eq!(json, serde_json::Value::String(v.label().to_string()));
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn ablation_kinds_cover_the_grid() {
        assert!(Variant::Baseline.corrector_kind().is_none());
        assert!(Variant::DeeperBaseline.corrector_kind().is_none());
        let full = Variant::Trc.corrector_kind().unwrap();
        assert!(full.use_reestimation && full.use_mapping && full.use_orth);
        let sc_de = Variant::ScDe.corrector_kind().unwrap();
        assert!(!sc_de.use_reestimation && sc_de.use_mapping && sc_de.use_orth);
        for v in Variant::all() {
            if let Some(kind) = v.corrector_kind() {
                kind.validate().unwrap();
            }
        }
    }
}

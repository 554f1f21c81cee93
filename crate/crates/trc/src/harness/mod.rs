//! Experiment harness: configuration, multi-seed orchestration across
//! baseline/corrected/ablation variants, significance testing, and report
//! emission.

pub mod config;
pub mod report;
pub mod runner;
pub mod wilcoxon;

pub use config::{load_config, DatasetKind, ExperimentConfig, Variant};
pub use report::{metric_name, summarize, write_report, Report, RunRow, VariantSummary};
pub use runner::{prepare_seed_split, raw_seed_split, run_experiment};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

//! Experiment reports: flat per-(variant, seed) rows, per-variant summaries
//! and an optional significance test, serialized as JSON (full) and CSV
//! (flat rows).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::TaskKind;
use crate::error::{Error, Result};
use crate::fsio::{write_atomic, write_json_atomic};
use crate::harness::config::Variant;
use crate::harness::wilcoxon::WilcoxonResult;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: Variant,
    pub seed: u64,
    /// Test metric in original label units (RMSE or accuracy).
    pub metric: f64,
    /// Singular-value entropy of the final test representations.
    pub sve: f64,
    /// Wall-clock training time. The only nondeterministic field; excluded
    /// from reproducibility comparisons.
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub mean_metric: f64,
    /// Population standard deviation across seeds.
    pub std_metric: f64,
    pub median_metric: f64,
    pub mean_sve: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub task: TaskKind,
    /// "rmse" (lower is better) or "accuracy" (higher is better).
    pub metric_name: String,
    pub rows: Vec<RunRow>,
    pub summaries: Vec<VariantSummary>,
    /// Baseline-vs-full-correction significance, present with >= 6 pairs.
    /// Pairs are oriented so that small p-values support the correction.
    pub wilcoxon: Option<WilcoxonResult>,
}

pub fn metric_name(task: TaskKind) -> &'static str {
    if task.is_classification() {
        "accuracy"
    } else {
        "rmse"
    }
}

/// Median of a non-empty slice (mean of the middle two for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Per-variant aggregates, in first-appearance order of `rows`.
pub fn summarize(rows: &[RunRow]) -> Vec<VariantSummary> {
    let mut order: Vec<Variant> = Vec::new();
    for row in rows {
        if !order.contains(&row.variant) {
            order.push(row.variant);
        }
    }
    order
        .into_iter()
        .map(|variant| {
            let metrics: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == variant)
                .map(|r| r.metric)
                .collect();
            let sves: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == variant)
                .map(|r| r.sve)
                .collect();
            let n = metrics.len() as f64;
            let mean = metrics.iter().sum::<f64>() / n;
            let var = metrics.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
            VariantSummary {
                variant,
                mean_metric: mean,
                std_metric: var.sqrt(),
                median_metric: median(&metrics),
                mean_sve: sves.iter().sum::<f64>() / n,
            }
        })
        .collect()
}

/// Write `report.json` and `report.csv` under `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    write_json_atomic(&dir.join("report.json"), report)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv {
        path: dir.join("report.csv"),
        source: Box::new(e),
    };
    w.write_record(["variant", "seed", "metric", "sve", "seconds"])
        .map_err(csv_err)?;
    for row in &report.rows {
        w.write_record([
            row.variant.label().to_string(),
            row.seed.to_string(),
            row.metric.to_string(),
            row.sve.to_string(),
            row.seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    write_atomic(&dir.join("report.csv"), &bytes)
}

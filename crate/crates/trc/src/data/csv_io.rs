//! CSV ingestion with optional sidecar schemas.
//!
//! The loader is strict: every cell must be present and interpretable under
//! its column's kind, and failures carry the 1-based data row and column
//! name. Column kinds come from a sidecar schema file when given, otherwise
//! a column is numerical exactly when every cell parses as a finite number.
//! Categorical vocabularies are the sorted unique raw values, and cells are
//! stored as codes into that vocabulary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, TaskKind};
use crate::data::schema::{Column, ColumnKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

/// Sidecar schema: declared column kinds plus the label column's name.
///
/// ```json
/// {"columns": [{"name": "age", "kind": "numerical"}], "label": "income"}
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub columns: Vec<SchemaFileColumn>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFileColumn {
    pub name: String,
    pub kind: SchemaFileKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaFileKind {
    Numerical,
    Categorical,
}

impl SchemaFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    /// Label column name; required unless a schema file supplies it.
    pub label: Option<String>,
    pub schema: Option<SchemaFile>,
    /// Task kind; inferred from the label values when absent (see
    /// [`load_csv`]).
    pub task: Option<TaskKind>,
}

/// Load a headered CSV into a [`Dataset`].
///
/// Task inference when `opts.task` is `None`: numeric labels are
/// classification exactly when they look like class codes — the distinct
/// values are the integers 0..K−1 for some 2 ≤ K ≤ 20 (binary at K = 2) —
/// and regression otherwise; non-numeric labels are classification over
/// the distinct values.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: Box::new(e),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: Box::new(e),
        })?
        .iter()
        .map(str::to_string)
        .collect();

    let label_name = opts
        .label
        .clone()
        .or_else(|| opts.schema.as_ref().map(|s| s.label.clone()))
        .ok_or_else(|| Error::Config("no label column given (option or schema file)".into()))?;
    let label_idx = headers
        .iter()
        .position(|h| *h == label_name)
        .ok_or_else(|| Error::Schema(format!("label column '{label_name}' not in header")))?;

    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();
    if feature_idx.is_empty() {
        return Err(Error::Schema("CSV has no feature columns".into()));
    }

    // Pull every record into memory; the datasets this lab targets are small.
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(|e| Error::Csv {
            path: path.into(),
            source: Box::new(e),
        })?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("CSV has no data rows"));
    }
    let n = rows.len();
    let cell = |r: usize, c: usize| -> &str { rows[r].get(c).unwrap_or("") };

    // No silent missing values: emptiness anywhere is an ingestion error.
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if v.is_empty() {
                return Err(Error::Ingestion {
                    row: r + 1,
                    column: headers[c].clone(),
                    message: "empty cell".into(),
                });
            }
        }
    }

    // Resolve per-feature kinds: declared, or inferred from the cells.
    let declared: Option<Vec<SchemaFileKind>> = match &opts.schema {
        None => None,
        Some(schema) => {
            let mut kinds = Vec::with_capacity(feature_idx.len());
            for &c in &feature_idx {
                let found = schema
                    .columns
                    .iter()
                    .find(|col| col.name == headers[c])
                    .ok_or_else(|| {
                        Error::Schema(format!(
                            "schema file does not describe column '{}'",
                            headers[c]
                        ))
                    })?;
                kinds.push(found.kind);
            }
            for col in &schema.columns {
                if col.name != schema.label && !headers.contains(&col.name) {
                    return Err(Error::Schema(format!(
                        "schema file describes '{}', which the CSV lacks",
                        col.name
                    )));
                }
            }
            Some(kinds)
        }
    };

    let mut columns = Vec::with_capacity(feature_idx.len());
    let mut categories: Vec<Vec<String>> = Vec::with_capacity(feature_idx.len());
    let mut values = Matrix::zeros(n, feature_idx.len());
    for (out_c, &c) in feature_idx.iter().enumerate() {
        let name = headers[c].clone();
        let numerical = match &declared {
            Some(kinds) => kinds[out_c] == SchemaFileKind::Numerical,
            None => (0..n).all(|r| parse_finite(cell(r, c)).is_some()),
        };
        if numerical {
            for r in 0..n {
                let v = parse_finite(cell(r, c)).ok_or_else(|| Error::Ingestion {
                    row: r + 1,
                    column: name.clone(),
                    message: format!("cannot read '{}' as a finite number", cell(r, c)),
                })?;
                values.set(r, out_c, v);
            }
            columns.push(Column {
                name,
                kind: ColumnKind::Numerical,
            });
            categories.push(vec![]);
        } else {
            let mut vocab: Vec<String> = (0..n).map(|r| cell(r, c).to_string()).collect();
            vocab.sort();
            vocab.dedup();
            for r in 0..n {
                let code = vocab
                    .binary_search_by(|v| v.as_str().cmp(cell(r, c)))
                    .expect("vocabulary built from these cells");
                values.set(r, out_c, code as f64);
            }
            columns.push(Column {
                name,
                kind: ColumnKind::Categorical {
                    cardinality: vocab.len(),
                },
            });
            categories.push(vocab);
        }
    }

    let raw_labels: Vec<&str> = (0..n).map(|r| cell(r, label_idx)).collect();
    let (task, labels) = resolve_labels(&raw_labels, opts.task, &label_name)?;

    Dataset::new(
        FeatureSchema::new(columns)?,
        values,
        labels,
        task,
        categories,
    )
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn resolve_labels(
    raw: &[&str],
    declared: Option<TaskKind>,
    label_name: &str,
) -> Result<(TaskKind, Vec<f64>)> {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| parse_finite(s)).collect();
    let task = match declared {
        Some(t) => t,
        None => match &numeric {
            Some(values) => {
                let mut distinct = values.clone();
                distinct.sort_by(|a, b| a.partial_cmp(b).expect("labels are finite"));
                distinct.dedup();
                let k = distinct.len();
                let coded = (2..=20).contains(&k)
                    && distinct.iter().enumerate().all(|(i, &v)| v == i as f64);
                if coded {
                    if k == 2 {
                        TaskKind::Binary
                    } else {
                        TaskKind::Multiclass(k)
                    }
                } else {
                    TaskKind::Regression
                }
            }
            None => {
                let mut distinct: Vec<&str> = raw.to_vec();
                distinct.sort_unstable();
                distinct.dedup();
                if distinct.len() == 2 {
                    TaskKind::Binary
                } else {
                    TaskKind::Multiclass(distinct.len())
                }
            }
        },
    };

    match task {
        TaskKind::Regression => {
            let mut labels = Vec::with_capacity(raw.len());
            for (r, s) in raw.iter().enumerate() {
                let v = parse_finite(s).ok_or_else(|| Error::Ingestion {
                    row: r + 1,
                    column: label_name.to_string(),
                    message: format!("cannot read '{s}' as a regression target"),
                })?;
                labels.push(v);
            }
            Ok((task, labels))
        }
        _ => {
            let classes = task.n_classes().expect("classification");
            if classes < 2 {
                return Err(Error::Schema(format!(
                    "label column '{label_name}' has a single distinct value"
                )));
            }
            // Code classes by value: numerically when all labels are
            // numbers, lexicographically otherwise.
            let mut vocab: Vec<String> = raw.iter().map(|s| s.to_string()).collect();
            match &numeric {
                Some(_) => vocab.sort_by(|a, b| {
                    let (a, b) = (parse_finite(a).unwrap(), parse_finite(b).unwrap());
                    a.partial_cmp(&b).unwrap()
                }),
                None => vocab.sort(),
            }
            vocab.dedup();
            if vocab.len() != classes {
                return Err(Error::Schema(format!(
                    "label column '{label_name}' has {} distinct values, task declares {classes}",
                    vocab.len()
                )));
            }
            let labels = raw
                .iter()
                .map(|s| {
                    vocab
                        .iter()
                        .position(|v| v == s)
                        .expect("vocabulary covers labels") as f64
                })
                .collect();
            Ok((task, labels))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn infers_kinds_and_codes_categories_sorted() {
        let f = write_csv("a,c,y\n1.5,b,10\n2.0,a,20\n3.5,b,30\n");
        let ds = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ds.task(), TaskKind::Regression);
        assert_eq!(ds.schema().column(0).kind, ColumnKind::Numerical);
        assert_eq!(
            ds.schema().column(1).kind,
            ColumnKind::Categorical { cardinality: 2 }
        );
        // "a" < "b" in the sorted vocabulary, so cells (b, a, b) -> (1, 0, 1).
        assert_eq!(ds.values().get(0, 1), 1.0);
        assert_eq!(ds.values().get(1, 1), 0.0);
        assert_eq!(ds.values().get(2, 1), 1.0);
        assert_eq!(ds.labels(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn ingestion_error_carries_row_and_column() {
        let f = write_csv("a,y\nabc,1.0\n2.0,2.0\n");
        let schema = SchemaFile {
            columns: vec![SchemaFileColumn {
                name: "a".into(),
                kind: SchemaFileKind::Numerical,
            }],
            label: "y".into(),
        };
        let err = load_csv(
            f.path(),
            &CsvOptions {
                label: None,
                schema: Some(schema),
                task: Some(TaskKind::Regression),
            },
        )
        .unwrap_err();
        match err {
            Error::Ingestion { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "a");
            }
            other => panic!("expected ingestion error, got {other}"),
        }
    }

    #[test]
    fn empty_cells_are_ingestion_errors() {
        let f = write_csv("a,y\n1.0,1.0\n,2.0\n");
        let err = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::Ingestion { row, column, .. } => {
                assert_eq!((row, column.as_str()), (2, "a"));
            }
            other => panic!("expected ingestion error, got {other}"),
        }
    }

    #[test]
    fn schema_file_overrides_inference_and_is_cross_checked() {
        // Numeric-looking column forced categorical by the schema.
        let f = write_csv("zip,y\n10,1.0\n20,2.0\n10,3.0\n");
        let schema = SchemaFile {
            columns: vec![SchemaFileColumn {
                name: "zip".into(),
                kind: SchemaFileKind::Categorical,
            }],
            label: "y".into(),
        };
        let ds = load_csv(
            f.path(),
            &CsvOptions {
                label: None,
                schema: Some(schema),
                task: Some(TaskKind::Regression),
            },
        )
        .unwrap();
        assert_eq!(
            ds.schema().column(0).kind,
            ColumnKind::Categorical { cardinality: 2 }
        );

        // Schema naming a column the CSV lacks.
        let bad = SchemaFile {
            columns: vec![
                SchemaFileColumn {
                    name: "zip".into(),
                    kind: SchemaFileKind::Categorical,
                },
                SchemaFileColumn {
                    name: "ghost".into(),
                    kind: SchemaFileKind::Numerical,
                },
            ],
            label: "y".into(),
        };
        assert!(matches!(
            load_csv(
                f.path(),
                &CsvOptions {
                    label: None,
                    schema: Some(bad),
                    task: Some(TaskKind::Regression),
                }
            ),
            Err(Error::Schema(_))
        ));

        // Schema missing a column the CSV has.
        let f2 = write_csv("zip,extra,y\n10,1,1.0\n20,2,2.0\n");
        let incomplete = SchemaFile {
            columns: vec![SchemaFileColumn {
                name: "zip".into(),
                kind: SchemaFileKind::Categorical,
            }],
            label: "y".into(),
        };
        assert!(matches!(
            load_csv(
                f2.path(),
                &CsvOptions {
                    label: None,
                    schema: Some(incomplete),
                    task: Some(TaskKind::Regression),
                }
            ),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn task_inference_rules() {
        // Two distinct integer labels -> binary.
        let f = write_csv("a,y\n1.0,0\n2.0,1\n3.0,0\n");
        let ds = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ds.task(), TaskKind::Binary);

        // Fractional labels -> regression.
        let f = write_csv("a,y\n1.0,0.25\n2.0,1.5\n3.0,0.75\n");
        let ds = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ds.task(), TaskKind::Regression);

        // Non-numeric labels -> classification with sorted coding.
        let f = write_csv("a,y\n1.0,no\n2.0,yes\n3.0,no\n");
        let ds = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ds.task(), TaskKind::Binary);
        assert_eq!(ds.labels(), &[0.0, 1.0, 0.0]); // no=0, yes=1
    }

    #[test]
    fn numeric_class_labels_are_coded_in_numeric_order() {
        // Lexicographic order would put "10" before "2"; numeric-aware
        // coding must not.
        let f = write_csv("a,y\n1.0,2\n2.0,10\n3.0,0\n");
        let ds = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                task: Some(TaskKind::Multiclass(3)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ds.labels(), &[1.0, 2.0, 0.0]);
    }

    #[test]
    fn declared_class_count_is_enforced() {
        let f = write_csv("a,y\n1.0,x\n2.0,y\n3.0,z\n");
        let err = load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                task: Some(TaskKind::Binary),
                ..Default::default()
            },
        );
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn missing_label_column_and_empty_file_are_errors() {
        let f = write_csv("a,y\n1.0,2.0\n");
        assert!(load_csv(
            f.path(),
            &CsvOptions {
                label: Some("nope".into()),
                ..Default::default()
            }
        )
        .is_err());

        let f = write_csv("a,y\n");
        assert!(load_csv(
            f.path(),
            &CsvOptions {
                label: Some("y".into()),
                ..Default::default()
            }
        )
        .is_err());

        // No label given at all.
        let f = write_csv("a,y\n1.0,2.0\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn schema_file_round_trips_through_json() {
        let schema = SchemaFile {
            columns: vec![
                SchemaFileColumn {
                    name: "age".into(),
                    kind: SchemaFileKind::Numerical,
                },
                SchemaFileColumn {
                    name: "job".into(),
                    kind: SchemaFileKind::Categorical,
                },
            ],
            label: "income".into(),
        };
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(serde_json::to_string(&schema).unwrap().as_bytes())
            .unwrap();
        f.flush().unwrap();
        assert_eq!(SchemaFile::from_path(f.path()).unwrap(), schema);

        // The documented literal shape parses too.
        let mut f2 = tempfile::NamedTempFile::new().unwrap();
        f2.write_all(br#"{"columns":[{"name":"age","kind":"numerical"}],"label":"income"}"#)
            .unwrap();
        f2.flush().unwrap();
        let parsed = SchemaFile::from_path(f2.path()).unwrap();
        assert_eq!(parsed.label, "income");
        assert_eq!(parsed.columns[0].kind, SchemaFileKind::Numerical);
    }
}

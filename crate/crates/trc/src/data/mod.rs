//! Tabular data handling: schemas, datasets, deterministic splits,
//! preprocessing, empirical sampling, noise injection, CSV ingestion and
//! synthetic dataset generation.
//!
//! A [`Dataset`] stores features as an `N x d` matrix of `f64` where
//! categorical cells hold integer codes into per-column sorted vocabularies.
//! Everything downstream (backbones, correctors, diagnostics) consumes this
//! one representation.

pub mod csv_io;
pub mod dataset;
pub mod preprocess;
pub mod sampler;
pub mod schema;
pub mod split;
pub mod synthetic;

pub use csv_io::{load_csv, CsvOptions, SchemaFile};
pub use dataset::{Dataset, TaskKind};
pub use preprocess::{PreprocessMode, Preprocessor};
pub use sampler::{inject_feature_noise, EmpiricalSampler};
pub use schema::{Column, ColumnKind, FeatureSchema};
pub use split::{split_dataset, Split, SplitRatios};
pub use synthetic::{generate_synthetic, SyntheticSpec};

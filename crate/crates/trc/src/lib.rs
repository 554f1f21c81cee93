//! A small laboratory for representation correction on tabular data.
//!
//! The crate trains compact feed-forward backbones on tabular datasets,
//! freezes them, and then *corrects* their representations instead of
//! retraining: a shift estimator learns to undo simulated feature corruption
//! in representation space, and a light embedding space re-expresses the
//! cleaned representation as a convex-style combination of a few learned
//! basis vectors before a fresh prediction head is fit on top.
//!
//! Everything is built around a deterministic, dependency-free f64 numeric
//! kernel ([`nn`]), so identical seeds give bit-identical models, reports and
//! checkpoints on every platform.
//!
//! Module map:
//!
//! * [`nn`] — matrices, layers, reverse-mode gradients, AdamW, spectra.
//! * [`data`] — CSV ingestion, schemas, splits, preprocessing, synthesis.
//! * [`backbone`] — backbone networks: build, train, evaluate, checkpoint.
//! * [`diagnostics`] — spectral entropy, per-sample gradient norms, studies.
//! * [`trc`] — the corrector itself: shift simulation, re-estimation,
//!   light-embedding mapping, joint training.
//! * [`harness`] — multi-seed experiment runner, reports, paired statistics.

pub mod backbone;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fsio;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod trc;

pub use error::{Error, Result};

//! Representation diagnostics.
//!
//! The central quantity is the singular-value entropy of a representation
//! matrix: normalize the singular values to a probability vector and take
//! the Shannon entropy (natural log). Its exponential is the effective rank
//! — a smooth count of the directions a representation actually uses. A
//! collapsed representation concentrates its spectrum and scores a low
//! effective rank regardless of overall scale.

pub mod grad_norms;
pub mod studies;

pub use grad_norms::{lp_q_norm, per_sample_grad_norms, GradNormEntry, GradNormTable};
pub use studies::{
    heavy_light_shift_oracle, noise_robustness_study, noise_study_means, write_noise_study_csv,
    NoiseStudyRow, ShiftOracleOutcome, ShiftOracleSettings, StudyRecipe,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::matrix::Matrix;
use crate::nn::spectral::singular_values;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Singular values, descending.
    pub singular_values: Vec<f64>,
    /// Shannon entropy (natural log) of the normalized spectrum.
    pub sve: f64,
    /// `exp(sve)`; 0 for an all-zero matrix, whose spectrum carries no
    /// directions at all.
    pub effective_rank: f64,
}

/// Singular-value entropy of a representation matrix (rows = samples).
pub fn sve(reprs: &Matrix) -> Result<SpectrumReport> {
    let sigma = singular_values(reprs)?;
    let total: f64 = sigma.iter().sum();
    if total <= 0.0 {
        return Ok(SpectrumReport {
            singular_values: sigma,
            sve: 0.0,
            effective_rank: 0.0,
        });
    }
    let mut entropy = 0.0;
    for &s in &sigma {
        let p = s / total;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    Ok(SpectrumReport {
        singular_values: sigma,
        sve: entropy,
        effective_rank: entropy.exp(),
    })
}

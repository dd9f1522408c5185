//! Information criteria and the boundary likelihood-ratio test for a frailty variance.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ModelFit;
use crate::frailty::Structure;

/// 5% critical value of the ½χ²₀ + ½χ²₁ mixture (the 90th percentile of χ²₁).
pub const MIXTURE_CRITICAL_5: f64 = 2.705543;

/// Negative statistics down to this are read as zero.
pub const LRT_NEGATIVE_TOLERANCE: f64 = 1e-6;

/// `−2p + 2 df_r`.
pub fn raic_from(deviance_profile: f64, df_r: usize) -> f64 {
    deviance_profile + 2.0 * df_r as f64
}

/// `−2Σℓ1 + 2 df_c`.
pub fn caic_from(cond_deviance: f64, df_c: f64) -> f64 {
    cond_deviance + 2.0 * df_c
}

pub fn raic(fit: &ModelFit) -> f64 {
    raic_from(fit.deviance_profile, fit.df_r)
}

pub fn caic(fit: &ModelFit) -> f64 {
    caic_from(fit.cond_deviance, fit.df_c)
}

/// Whether `null` is `alt` with exactly one frailty variance set to zero.
pub fn is_single_variance_nesting(null: Structure, alt: Structure) -> bool {
    use Structure::*;
    matches!((null, alt), (None, Scale) | (None, Shape) | (Scale, Independent) | (Shape, Independent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Mixture-χ² test from the two `−2p` values.
pub fn lrt_from_deviances(deviance_null: f64, deviance_alt: f64) -> Result<LrtResult> {
    let raw = deviance_null - deviance_alt;
    if !raw.is_finite() || raw < -LRT_NEGATIVE_TOLERANCE {
        return Err(Error::InconsistentFits(raw));
    }
    let statistic = raw.max(0.0);
    // ½ P(χ²₁ > s) = ½ erfc(√(s/2)); equals ½ at s = 0.
    let p_value = 0.5 * libm::erfc((statistic / 2.0).sqrt());
    Ok(LrtResult {
        statistic,
        critical_value: MIXTURE_CRITICAL_5,
        p_value,
        significant: statistic > MIXTURE_CRITICAL_5,
    })
}

/// Tests the extra variance of `alt` over `null`.
pub fn frailty_lrt(null: &ModelFit, alt: &ModelFit) -> Result<LrtResult> {
    if !is_single_variance_nesting(null.structure, alt.structure) {
        return Err(Error::Structure(format!(
            "{} is not {} with one variance pinned at zero",
            null.structure, alt.structure
        )));
    }
    if !(null.converged && alt.converged) {
        return Err(Error::InconsistentFits(null.deviance_profile - alt.deviance_profile));
    }
    lrt_from_deviances(null.deviance_profile, alt.deviance_profile)
}

/// One row of a model comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub model: String,
    pub deviance_r: f64,
    pub df_r: usize,
    pub raic: f64,
    pub delta_raic: f64,
    pub deviance_c: f64,
    pub df_c: f64,
    pub caic: f64,
    pub delta_caic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    /// Index of the smallest rAIC (first on ties).
    pub best_raic: usize,
    pub best_caic: usize,
}

/// The raw numbers a row is computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionInput {
    pub model: String,
    pub deviance_r: f64,
    pub df_r: usize,
    pub deviance_c: f64,
    pub df_c: f64,
}

impl From<&ModelFit> for SelectionInput {
    fn from(f: &ModelFit) -> Self {
        Self {
            model: f.structure.code().to_string(),
            deviance_r: f.deviance_profile,
            df_r: f.df_r,
            deviance_c: f.cond_deviance,
            df_c: f.df_c,
        }
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

impl SelectionReport {
    pub fn from_inputs(inputs: &[SelectionInput]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidData("no models to compare".to_string()));
        }
        let r: Vec<f64> = inputs.iter().map(|i| raic_from(i.deviance_r, i.df_r)).collect();
        let c: Vec<f64> = inputs.iter().map(|i| caic_from(i.deviance_c, i.df_c)).collect();
        let (best_raic, best_caic) = (argmin(&r), argmin(&c));
        let rows = inputs
            .iter()
            .enumerate()
            .map(|(k, i)| SelectionRow {
                model: i.model.clone(),
                deviance_r: i.deviance_r,
                df_r: i.df_r,
                raic: r[k],
                delta_raic: r[k] - r[best_raic],
                deviance_c: i.deviance_c,
                df_c: i.df_c,
                caic: c[k],
                delta_caic: c[k] - c[best_caic],
            })
            .collect();
        Ok(Self { rows, best_raic, best_caic })
    }

    pub fn from_fits(fits: &[ModelFit]) -> Result<Self> {
        let inputs: Vec<SelectionInput> = fits.iter().map(SelectionInput::from).collect();
        Self::from_inputs(&inputs)
    }
}

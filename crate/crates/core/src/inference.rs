//! Hazard ratios with parametric-bootstrap bands, and per-cluster frailty intervals.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineFamily;
use crate::error::{Error, Result};
use crate::estimation::ModelFit;
use crate::model::FixedParams;

/// Two-sided normal quantile used for frailty intervals.
pub const Z_975: f64 = 1.96;
pub const MIN_BOOTSTRAP: usize = 100;

/// Everything needed to evaluate `HR_k(t)` for a parameter vector: where `x_k`
/// sits in each predictor and the reference rows with `x_k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HrReference {
    pub family: BaselineFamily,
    pub covariate: String,
    /// Position of `x_k` in `β` (intercept at 0), if it enters the scale.
    pub scale_index: Option<usize>,
    pub shape_index: Option<usize>,
    /// Scale row `(1, x_(−k))` with `x_k = 0`.
    pub x_scale: Vec<f64>,
    pub x_shape: Vec<f64>,
    /// Values used for the other covariates.
    pub reference_covariates: Vec<(String, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HrReference {
    /// Reference rows at the empirical modes of every other covariate.
    pub fn new(fit: &ModelFit, covariate: &str) -> Result<Self> {
        let info = fit
            .covariates
            .iter()
            .find(|c| c.name == covariate)
            .ok_or_else(|| Error::UnknownCovariate(covariate.to_string()))?;
        if !info.binary {
            return Err(Error::UnsupportedCovariate(format!("{covariate} is not a 0/1 covariate")));
        }
        let mode = |name: &str| fit.covariates.iter().find(|c| c.name == name).map_or(0.0, |c| c.mode);
        let row = |names: &[String]| -> Vec<f64> {
            core::iter::once(1.0).chain(names.iter().map(|n| if n == covariate { 0.0 } else { mode(n) })).collect()
        };
        let position = |names: &[String]| names.iter().position(|n| n == covariate).map(|i| i + 1);
        let reference_covariates =
            fit.covariates.iter().filter(|c| c.name != covariate).map(|c| (c.name.clone(), c.mode)).collect();
        Ok(Self {
            family: fit.family,
            covariate: covariate.to_string(),
            scale_index: position(&fit.scale_names),
            shape_index: position(&fit.shape_names),
            x_scale: row(&fit.scale_names),
            x_shape: row(&fit.shape_names),
            reference_covariates,
        })
    }

    fn coefficients(&self, theta: &FixedParams) -> (f64, f64) {
        (self.scale_index.map_or(0.0, |i| theta.beta[i]), self.shape_index.map_or(0.0, |i| theta.alpha[i]))
    }

    /// Weibull closed form `exp(β_k + α_k) t^{exp(x_(−k)'α)(exp(α_k) − 1)}`.
    pub fn closed_form(&self, theta: &FixedParams, t: f64) -> f64 {
        let (bk, ak) = self.coefficients(theta);
        let power = dot(&self.x_shape, &theta.alpha).exp() * ak.exp_m1();
        (bk + ak + power * t.ln()).exp()
    }

    /// `λ(t | x_k = 1) / λ(t | x_k = 0)` from the hazard itself.
    pub fn direct(&self, theta: &FixedParams, t: f64) -> Result<f64> {
        let (bk, ak) = self.coefficients(theta);
        let eta0 = dot(&self.x_scale, &theta.beta);
        let zeta0 = dot(&self.x_shape, &theta.alpha);
        let log_hazard = |eta: f64, zeta: f64| -> Result<f64> {
            let gamma = zeta.exp();
            let s = t.powf(gamma);
            Ok(eta + zeta + (gamma - 1.0) * t.ln() + self.family.log_hazard(s)?)
        };
        Ok((log_hazard(eta0 + bk, zeta0 + ak)? - log_hazard(eta0, zeta0)?).exp())
    }

    /// Point value: the closed form for Weibull, the direct ratio otherwise.
    pub fn evaluate(&self, theta: &FixedParams, t: f64) -> Result<f64> {
        match self.family {
            BaselineFamily::Weibull => Ok(self.closed_form(theta, t)),
            _ => self.direct(theta, t),
        }
    }

    pub fn curve(&self, theta: &FixedParams, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.evaluate(theta, t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioCurve {
    pub covariate: String,
    pub times: Vec<f64>,
    pub hr: Vec<f64>,
    /// Equal to `hr` until a bootstrap fills them in.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub reference_covariates: Vec<(String, f64)>,
    pub replicates: usize,
}

fn check_times(times: &[f64]) -> Result<()> {
    match times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        Some(&t) => Err(Error::Domain { what: "time", value: t }),
        None => Ok(()),
    }
}

/// `HR_k(t)` over a grid, other covariates at their modes and `v_α = 0`.
pub fn hazard_ratio_curve(fit: &ModelFit, covariate: &str, times: &[f64]) -> Result<HazardRatioCurve> {
    check_times(times)?;
    let r = HrReference::new(fit, covariate)?;
    let hr = r.curve(&fit.theta, times)?;
    Ok(HazardRatioCurve {
        covariate: covariate.to_string(),
        times: times.to_vec(),
        lower: hr.clone(),
        upper: hr.clone(),
        hr,
        reference_covariates: r.reference_covariates,
        replicates: 0,
    })
}

/// Draws `θ ~ N(θ̂, C)` for the fixed-effect block `C` of `H⁻¹`.
#[derive(Debug, Clone)]
pub struct ThetaSampler {
    mean: DVector<f64>,
    /// `L` with `L Lᵀ = C`; built from the eigen decomposition so a
    /// semi-definite `C` (e.g. all zeros) is fine.
    factor: DMatrix<f64>,
    p_scale: usize,
}

impl ThetaSampler {
    pub fn new(fit: &ModelFit) -> Result<Self> {
        let d = fit.n_fixed();
        if fit.fixed_covariance.len() != d || fit.fixed_covariance.iter().any(|r| r.len() != d) {
            return Err(Error::Bootstrap("fixed-effect covariance has the wrong shape".to_string()));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| 0.5 * (fit.fixed_covariance[i][j] + fit.fixed_covariance[j][i]));
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::Bootstrap("fixed-effect covariance is not finite".to_string()));
        }
        let eig = SymmetricEigen::new(cov);
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
        if eig.eigenvalues.iter().any(|&l| l < -tol) {
            return Err(Error::Bootstrap("fixed-effect covariance is not positive semi-definite".to_string()));
        }
        let root = DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
        let factor = eig.eigenvectors * DMatrix::from_diagonal(&root);
        let mut mean = fit.theta.beta.clone();
        mean.extend_from_slice(&fit.theta.alpha);
        Ok(Self { mean: DVector::from_vec(mean), factor, p_scale: fit.theta.beta.len() })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FixedParams {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let th = &self.mean + &self.factor * z;
        FixedParams { beta: th.as_slice()[..self.p_scale].to_vec(), alpha: th.as_slice()[self.p_scale..].to_vec() }
    }
}

/// RNG of bootstrap replicate `b`.
pub fn bootstrap_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// HR curve of bootstrap replicate `b`; depends only on `(seed, b)`.
pub fn bootstrap_replicate(
    sampler: &ThetaSampler,
    reference: &HrReference,
    times: &[f64],
    seed: u64,
    b: usize,
) -> Result<Vec<f64>> {
    let theta = sampler.draw(&mut bootstrap_rng(seed, b));
    reference.curve(&theta, times)
}

/// Linear-interpolation sample quantile of sorted data (the usual "type 7").
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise 2.5% and 97.5% bands from replicate curves given in replicate order.
pub fn percentile_bands(curve: &mut HazardRatioCurve, replicates: &[Vec<f64>]) -> Result<()> {
    if replicates.is_empty() {
        return Err(Error::Bootstrap("no replicates".to_string()));
    }
    let mut column = vec![0.0; replicates.len()];
    for j in 0..curve.times.len() {
        for (c, r) in column.iter_mut().zip(replicates) {
            *c = r[j];
        }
        if column.iter().any(|x| !x.is_finite()) {
            return Err(Error::Bootstrap(format!("non-finite replicate at t = {}", curve.times[j])));
        }
        column.sort_by(|a, b| a.total_cmp(b));
        // Keep the point estimate inside the band even for degenerate draws.
        curve.lower[j] = quantile_sorted(&column, 0.025).min(curve.hr[j]);
        curve.upper[j] = quantile_sorted(&column, 0.975).max(curve.hr[j]);
    }
    curve.replicates = replicates.len();
    Ok(())
}

/// Sets up a bootstrap: the point curve plus the pieces each replicate needs.
pub fn bootstrap_setup(
    fit: &ModelFit,
    covariate: &str,
    times: &[f64],
    replicates: usize,
) -> Result<(HazardRatioCurve, ThetaSampler, HrReference)> {
    if replicates < MIN_BOOTSTRAP {
        return Err(Error::Bootstrap(format!("need at least {MIN_BOOTSTRAP} replicates, got {replicates}")));
    }
    let curve = hazard_ratio_curve(fit, covariate, times)?;
    let sampler = ThetaSampler::new(fit)?;
    let reference = HrReference::new(fit, covariate)?;
    Ok((curve, sampler, reference))
}

/// HR curve with parametric-bootstrap 95% bands, replicates run in order.
pub fn bootstrap_hr_ci(
    fit: &ModelFit,
    covariate: &str,
    times: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<HazardRatioCurve> {
    let (mut curve, sampler, reference) = bootstrap_setup(fit, covariate, times, replicates)?;
    let draws = (0..replicates)
        .map(|b| bootstrap_replicate(&sampler, &reference, times, seed, b))
        .collect::<Result<Vec<_>>>()?;
    percentile_bands(&mut curve, &draws)?;
    Ok(curve)
}

/// Which random effect to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Scale,
    Shape,
}

impl core::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scale" => Ok(Self::Scale),
            "shape" => Ok(Self::Shape),
            other => Err(Error::InvalidData(format!("unknown frailty component `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyInterval {
    pub cluster: String,
    pub size: usize,
    pub estimate: f64,
    /// `None` when the standard error is unavailable.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Multiplicative effect `exp(v̂)`.
    pub u: f64,
}

/// `v̂ ± 1.96 se` per cluster, ordered by increasing cluster size.
pub fn frailty_estimates(fit: &ModelFit, component: Component) -> Result<Vec<FrailtyInterval>> {
    let s = fit.structure;
    let (present, est, se) = match component {
        Component::Scale => (s.has_scale_block() || s == crate::Structure::Common, &fit.v.v_beta, &fit.se_v_beta),
        Component::Shape => (s.shape_varies(), &fit.v.v_alpha, &fit.se_v_alpha),
    };
    if !present {
        return Err(Error::Structure(format!("{s} has no {component:?} frailty").to_lowercase()));
    }
    let mut out: Vec<FrailtyInterval> = (0..fit.cluster_labels.len())
        .map(|i| {
            let v = est[i];
            let half = se.get(i).copied().flatten().map(|s| Z_975 * s);
            FrailtyInterval {
                cluster: fit.cluster_labels[i].clone(),
                size: fit.cluster_sizes[i],
                estimate: v,
                lower: half.map(|h| v - h),
                upper: half.map(|h| v + h),
                u: v.exp(),
            }
        })
        .collect();
    out.sort_by_key(|f| f.size);
    Ok(out)
}

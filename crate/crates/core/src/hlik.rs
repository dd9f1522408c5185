//! The log h-likelihood, its analytic score, the observed information and the
//! adjusted profile likelihood used to estimate the dispersion parameters.
//!
//! Parameters are stacked as `ψ = (β, α, v_β, v_α)`, dropping whichever
//! random-effect block the structure does not carry. Under the common
//! structure only `v_β` is free and the shape predictor picks up `φ v_β`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineFamily;
use crate::error::{Error, Result};
use crate::frailty::{FrailtySpec, Structure};
use crate::linalg::SpdFactor;
use crate::model::{Design, FixedParams, RandomEffects, MAX_LINEAR_PREDICTOR};

/// `h` split into its conditional and frailty parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlikValue {
    pub h: f64,
    pub ell1_sum: f64,
    pub ell2_sum: f64,
}

/// Positions of each block inside the stacked parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub p_scale: usize,
    pub p_shape: usize,
    pub q: usize,
    pub structure: Structure,
}

impl Layout {
    pub fn new(design: &Design, structure: Structure) -> Self {
        Self { p_scale: design.p_scale(), p_shape: design.p_shape(), q: design.q(), structure }
    }

    pub fn n_fixed(&self) -> usize {
        self.p_scale + self.p_shape
    }

    pub fn dim(&self) -> usize {
        self.n_fixed() + self.structure.blocks() * self.q
    }

    /// Offset of the `v_β` block, if free.
    pub fn scale_block(&self) -> Option<usize> {
        self.structure.has_scale_block().then_some(self.n_fixed())
    }

    /// Offset of the `v_α` block, if free.
    pub fn shape_block(&self) -> Option<usize> {
        self.structure
            .has_shape_block()
            .then(|| self.n_fixed() + if self.structure.has_scale_block() { self.q } else { 0 })
    }

    pub fn pack(&self, theta: &FixedParams, v: &RandomEffects) -> DVector<f64> {
        let mut psi = DVector::zeros(self.dim());
        psi.rows_mut(0, self.p_scale).copy_from_slice(&theta.beta);
        psi.rows_mut(self.p_scale, self.p_shape).copy_from_slice(&theta.alpha);
        if let Some(o) = self.scale_block() {
            psi.rows_mut(o, self.q).copy_from_slice(&v.v_beta);
        }
        if let Some(o) = self.shape_block() {
            psi.rows_mut(o, self.q).copy_from_slice(&v.v_alpha);
        }
        psi
    }

    /// Splits `ψ`; absent effects are zero and `v_α = φ v_β` under the common structure.
    pub fn unpack(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> (FixedParams, RandomEffects) {
        let theta = FixedParams {
            beta: psi.rows(0, self.p_scale).iter().copied().collect(),
            alpha: psi.rows(self.p_scale, self.p_shape).iter().copied().collect(),
        };
        let mut v = RandomEffects::zeros(self.q);
        if let Some(o) = self.scale_block() {
            v.v_beta.copy_from_slice(psi.rows(o, self.q).as_slice());
        }
        if let Some(o) = self.shape_block() {
            v.v_alpha.copy_from_slice(psi.rows(o, self.q).as_slice());
        }
        if self.structure == Structure::Common {
            let phi = spec.phi();
            v.v_alpha = v.v_beta.iter().map(|b| phi * b).collect();
        }
        (theta, v)
    }

    fn check(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> Result<()> {
        if psi.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, expected {}",
                psi.len(),
                self.dim()
            )));
        }
        if spec.structure() != self.structure {
            return Err(Error::Structure(format!("spec is {} but layout is {}", spec.structure(), self.structure)));
        }
        spec.validate()
    }
}

/// Per-record log density and its derivatives with respect to `log τ` and `log γ`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RecordTerms {
    pub ell1: f64,
    pub u_beta: f64,
    pub u_alpha: f64,
    pub w_beta: f64,
    pub w_alpha: f64,
    pub w_beta_alpha: f64,
}

pub(crate) fn record_terms(
    family: BaselineFamily,
    t: f64,
    event: bool,
    log_tau: f64,
    log_gamma: f64,
    derivs: bool,
) -> Result<RecordTerms> {
    let delta = if event { 1.0 } else { 0.0 };
    let tau = log_tau.exp();
    let gamma = log_gamma.exp();
    let log_t = t.ln();
    let s = (gamma * log_t).exp();
    let cum = family.cumulative(s)?;
    let log_haz = family.log_hazard(s)?;
    let ell1 = delta * (log_tau + log_gamma + (gamma - 1.0) * log_t + log_haz) - tau * cum;
    let mut out = RecordTerms { ell1, u_beta: 0.0, u_alpha: 0.0, w_beta: 0.0, w_alpha: 0.0, w_beta_alpha: 0.0 };
    if derivs {
        let d = family.hazard_derivs(s)?;
        let a = d.d1 / d.hazard;
        let gl = gamma * log_t;
        let tsl = tau * s * d.hazard;
        out.u_beta = delta - tau * cum;
        out.u_alpha = delta + (delta * (1.0 + s * a) - tsl) * gl;
        out.w_beta = tau * cum;
        out.w_beta_alpha = tsl * gl;
        let inner = delta * (s * d.d2 / d.hazard + a - s * a * a) - tau * (d.hazard + s * d.d1);
        out.w_alpha = -(delta * (1.0 + s * a) + gl * s * inner - tsl) * gl;
    }
    Ok(out)
}

/// `ℓ1` for a single record.
pub fn cond_loglik(family: BaselineFamily, t: f64, event: bool, tau: f64, gamma: f64) -> Result<f64> {
    if !(t > 0.0 && tau > 0.0 && gamma > 0.0) || !t.is_finite() {
        return Err(Error::Domain { what: "record (t, τ, γ)", value: t.min(tau).min(gamma) });
    }
    let r = record_terms(family, t, event, tau.ln(), gamma.ln(), false)?;
    if !r.ell1.is_finite() {
        return Err(Error::Evaluation { record: 0 });
    }
    Ok(r.ell1)
}

/// `Σ_i ℓ2i`, the frailty log density summed over clusters.
pub fn frailty_logdensity(spec: &FrailtySpec, v: &RandomEffects) -> Result<f64> {
    spec.validate()?;
    let p = spec.precision();
    let q = v.v_beta.len();
    if matches!(spec, FrailtySpec::None) {
        return Ok(0.0);
    }
    let (vb, va): (&[f64], &[f64]) = match spec.structure() {
        Structure::Scale | Structure::Common => (&v.v_beta, &[]),
        Structure::Shape => (&[], &v.v_alpha),
        _ => (&v.v_beta, &v.v_alpha),
    };
    let mut total = q as f64 * p.log_norm;
    for i in 0..q {
        let b = vb.get(i).copied().unwrap_or(0.0);
        let a = va.get(i).copied().unwrap_or(0.0);
        total -= 0.5 * (p.bb * b * b + p.aa * a * a + 2.0 * p.ba * b * a);
    }
    Ok(total)
}

/// What an evaluation should produce beyond `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Need {
    Value,
    Score,
    Information,
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value: HlikValue,
    pub score: DVector<f64>,
    /// `H`, including the frailty precision.
    pub information: DMatrix<f64>,
    /// `H*`, the data part of `H` alone.
    pub cond_information: Option<DMatrix<f64>>,
}

/// Evaluator bound to one dataset, family and structure.
#[derive(Debug, Clone, Copy)]
pub struct HlikModel<'a> {
    pub family: BaselineFamily,
    pub design: &'a Design,
    pub layout: Layout,
}

impl<'a> HlikModel<'a> {
    pub fn new(family: BaselineFamily, design: &'a Design, structure: Structure) -> Self {
        Self { family, design, layout: Layout::new(design, structure) }
    }

    pub fn value(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> Result<HlikValue> {
        Ok(self.evaluate(psi, spec, Need::Value, false)?.value)
    }

    pub fn score(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> Result<DVector<f64>> {
        Ok(self.evaluate(psi, spec, Need::Score, false)?.score)
    }

    pub fn information(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(psi, spec, Need::Information, false)?.information)
    }

    /// `H*`, the information of `Σ ℓ1` alone.
    pub fn cond_information(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(psi, spec, Need::Information, true)?.cond_information.expect("requested"))
    }

    /// `h − ½ log det(H / 2π)` at `ψ`, which should be the inner maximizer.
    pub fn adjusted_profile(&self, psi: &DVector<f64>, spec: &FrailtySpec) -> Result<f64> {
        let e = self.evaluate(psi, spec, Need::Information, false)?;
        profile_from(&e)
    }

    pub(crate) fn evaluate(
        &self,
        psi: &DVector<f64>,
        spec: &FrailtySpec,
        need: Need,
        cond: bool,
    ) -> Result<Evaluation> {
        let lay = &self.layout;
        lay.check(psi, spec)?;
        let d = self.design;
        let (ps, pa, q) = (lay.p_scale, lay.p_shape, lay.q);
        let dim = lay.dim();
        let scale_off = lay.scale_block();
        let shape_off = lay.shape_block();
        let common = lay.structure == Structure::Common;
        let phi = spec.phi();

        let beta = psi.rows(0, ps);
        let alpha = psi.rows(ps, pa);
        let eta_b = &d.x_scale * beta;
        let eta_a = &d.x_shape * alpha;

        let want_score = need >= Need::Score;
        let want_info = need >= Need::Information;
        let mut score = DVector::zeros(if want_score { dim } else { 0 });
        let mut info = DMatrix::zeros(if want_info { dim } else { 0 }, if want_info { dim } else { 0 });
        let mut ell1_sum = 0.0;

        // Sparse gradients of the two predictors with respect to ψ.
        let mut gb: Vec<(usize, f64)> = Vec::with_capacity(ps + 1);
        let mut ga: Vec<(usize, f64)> = Vec::with_capacity(pa + 1);

        for row in 0..d.n() {
            let c = d.cluster[row];
            let vb = scale_off.map_or(0.0, |o| psi[o + c]);
            let va = match shape_off {
                Some(o) => psi[o + c],
                None if common => phi * vb,
                None => 0.0,
            };
            let lt = eta_b[row] + vb;
            let lg = eta_a[row] + va;
            for value in [lt, lg] {
                if !(value.abs() <= MAX_LINEAR_PREDICTOR) {
                    return Err(Error::Diverged { record: row, value });
                }
            }
            let r =
                record_terms(self.family, d.times[row], d.events[row], lt, lg, want_score).map_err(|e| match e {
                    Error::Overflow(_) | Error::Domain { .. } => Error::Evaluation { record: row },
                    other => other,
                })?;
            if !r.ell1.is_finite() {
                return Err(Error::Evaluation { record: row });
            }
            ell1_sum += r.ell1;
            if !want_score {
                continue;
            }

            gb.clear();
            ga.clear();
            for j in 0..ps {
                gb.push((j, d.x_scale[(row, j)]));
            }
            for j in 0..pa {
                ga.push((ps + j, d.x_shape[(row, j)]));
            }
            if let Some(o) = scale_off {
                gb.push((o + c, 1.0));
                if common {
                    ga.push((o + c, phi));
                }
            }
            if let Some(o) = shape_off {
                ga.push((o + c, 1.0));
            }

            for &(i, x) in &gb {
                score[i] += r.u_beta * x;
            }
            for &(i, x) in &ga {
                score[i] += r.u_alpha * x;
            }
            if !want_info {
                continue;
            }
            if !(r.w_beta.is_finite() && r.w_alpha.is_finite() && r.w_beta_alpha.is_finite()) {
                return Err(Error::Evaluation { record: row });
            }
            for &(i, xi) in &gb {
                for &(j, xj) in &gb {
                    info[(i, j)] += r.w_beta * xi * xj;
                }
                for &(j, xj) in &ga {
                    let w = r.w_beta_alpha * xi * xj;
                    info[(i, j)] += w;
                    info[(j, i)] += w;
                }
            }
            for &(i, xi) in &ga {
                for &(j, xj) in &ga {
                    info[(i, j)] += r.w_alpha * xi * xj;
                }
            }
        }

        let cond_information = (want_info && cond).then(|| info.clone());

        // Frailty density, its gradient and the precision blocks Q.
        let prec = spec.precision();
        let mut ell2_sum = 0.0;
        if lay.structure != Structure::None {
            ell2_sum = q as f64 * prec.log_norm;
            for c in 0..q {
                let b = scale_off.map_or(0.0, |o| psi[o + c]);
                let a = shape_off.map_or(0.0, |o| psi[o + c]);
                ell2_sum -= 0.5 * (prec.bb * b * b + prec.aa * a * a + 2.0 * prec.ba * b * a);
                if want_score {
                    if let Some(o) = scale_off {
                        score[o + c] -= prec.bb * b + prec.ba * a;
                    }
                    if let Some(o) = shape_off {
                        score[o + c] -= prec.aa * a + prec.ba * b;
                    }
                }
                if want_info {
                    if let Some(o) = scale_off {
                        info[(o + c, o + c)] += prec.bb;
                    }
                    if let Some(o) = shape_off {
                        info[(o + c, o + c)] += prec.aa;
                    }
                    if let (Some(ob), Some(oa)) = (scale_off, shape_off) {
                        info[(ob + c, oa + c)] += prec.ba;
                        info[(oa + c, ob + c)] += prec.ba;
                    }
                }
            }
        }

        if want_score {
            if let Some(i) = score.iter().position(|x: &f64| !x.is_finite()) {
                return Err(Error::Evaluation { record: i });
            }
        }

        Ok(Evaluation {
            value: HlikValue { h: ell1_sum + ell2_sum, ell1_sum, ell2_sum },
            score,
            information: info,
            cond_information,
        })
    }
}

pub(crate) fn profile_from(e: &Evaluation) -> Result<f64> {
    let f = SpdFactor::new(&e.information)?;
    let dim = e.information.nrows() as f64;
    Ok(e.value.h - 0.5 * (f.log_det() - dim * (2.0 * PI).ln()))
}

/// Log h-likelihood at `(θ, v)`. Under the common structure `v_alpha` is
/// taken as `φ v_beta`.
pub fn h_loglik(
    family: BaselineFamily,
    design: &Design,
    theta: &FixedParams,
    v: &RandomEffects,
    spec: &FrailtySpec,
) -> Result<HlikValue> {
    let m = HlikModel::new(family, design, spec.structure());
    m.value(&m.layout.pack(theta, v), spec)
}

/// Analytic score `∂h/∂ψ` in stacked order.
pub fn score(
    family: BaselineFamily,
    design: &Design,
    theta: &FixedParams,
    v: &RandomEffects,
    spec: &FrailtySpec,
) -> Result<DVector<f64>> {
    let m = HlikModel::new(family, design, spec.structure());
    m.score(&m.layout.pack(theta, v), spec)
}

/// Observed information `H = −∂²h/∂ψ²`.
pub fn information(
    family: BaselineFamily,
    design: &Design,
    theta: &FixedParams,
    v: &RandomEffects,
    spec: &FrailtySpec,
) -> Result<DMatrix<f64>> {
    let m = HlikModel::new(family, design, spec.structure());
    m.information(&m.layout.pack(theta, v), spec)
}

/// Adjusted profile likelihood `p_{θ,v}(h)` at an inner maximizer.
pub fn adjusted_profile(
    family: BaselineFamily,
    design: &Design,
    theta: &FixedParams,
    v: &RandomEffects,
    spec: &FrailtySpec,
) -> Result<f64> {
    let m = HlikModel::new(family, design, spec.structure());
    m.adjusted_profile(&m.layout.pack(theta, v), spec)
}

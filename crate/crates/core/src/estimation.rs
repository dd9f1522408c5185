//! Alternating estimation: Newton-Raphson for `(θ, v)` at fixed dispersion,
//! then maximization of the adjusted profile likelihood over the dispersion.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineFamily;
use crate::error::{Error, Result};
use crate::frailty::{FrailtySpec, Structure};
use crate::hlik::{HlikModel, HlikValue, Need};
use crate::linalg::{max_abs, SpdFactor};
use crate::model::{build_design, CovariateInfo, Dataset, Design, FixedParams, RandomEffects};
use crate::optim::{self, BfgsOptions};

/// Dispersion estimates below this are reported as sitting on the boundary.
pub const BOUNDARY_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    /// Convergence of the inner Newton loop on `max |∂h/∂ψ|`.
    pub inner_tol: f64,
    /// Convergence of the alternation on the largest absolute parameter change.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub step_halving_max: usize,
    /// Seed `θ` with a no-frailty fit before the mixed-model iterations.
    pub warm_start: bool,
    /// Central-difference step, on the unconstrained scale, for dispersion standard errors.
    pub se_step: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            inner_tol: 1e-8,
            outer_tol: 1e-6,
            max_outer: 200,
            max_inner: 50,
            step_halving_max: 20,
            warm_start: true,
            se_step: 1e-4,
        }
    }
}

impl FitSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0 && self.se_step > 0.0) {
            return Err(Error::InvalidData("tolerances must be positive".to_string()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidData("iteration caps must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Conditions worth surfacing alongside a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// A single cluster leaves the frailty variance unidentifiable.
    SingleCluster,
    /// A dispersion estimate sits on the edge of its space; the reduced structure may fit as well.
    Boundary { parameter: String, value: f64 },
    /// The inverse information gave no usable variance for this parameter.
    MissingStandardError { parameter: String },
    /// Step halving ran out before `h` increased.
    StepHalvingExhausted,
    /// A small ridge was needed to factor the information matrix.
    Ridge,
    /// The dispersion search stopped on its iteration cap.
    OptimizerNotConverged,
}

/// Result of the inner Newton-Raphson loop.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub psi: DVector<f64>,
    pub value: HlikValue,
    pub information: DMatrix<f64>,
    pub max_score: f64,
    pub iterations: usize,
    /// `h` after every accepted step, starting point included.
    pub h_trace: Vec<f64>,
    /// `max |score|` at every iterate, starting point included.
    pub score_trace: Vec<f64>,
    pub ridged: bool,
    pub halving_exhausted: bool,
}

impl InnerSolution {
    /// `p_{θ,v}(h)` at this solution.
    pub fn profile(&self) -> Result<f64> {
        let f = SpdFactor::new(&self.information)?;
        let dim = self.information.nrows() as f64;
        Ok(self.value.h - 0.5 * (f.log_det() - dim * (2.0 * PI).ln()))
    }
}

/// Maximizes `h` over `ψ = (θ, v)` with the dispersion held fixed.
///
/// Each step solves `H Δ = ∂h/∂ψ` and halves the step until `h` does not
/// decrease (beyond round-off).
pub fn inner_newton(
    model: &HlikModel<'_>,
    psi0: &DVector<f64>,
    spec: &FrailtySpec,
    settings: &FitSettings,
) -> Result<InnerSolution> {
    let mut psi = psi0.clone();
    let mut eval = model.evaluate(&psi, spec, Need::Information, false)?;
    let mut sol = InnerSolution {
        psi: DVector::zeros(0),
        value: eval.value,
        information: DMatrix::zeros(0, 0),
        max_score: max_abs(&eval.score),
        iterations: 0,
        h_trace: vec![eval.value.h],
        score_trace: vec![max_abs(&eval.score)],
        ridged: false,
        halving_exhausted: false,
    };

    while sol.max_score >= settings.inner_tol {
        if sol.iterations >= settings.max_inner {
            return Err(Error::NonConvergence { iterations: sol.iterations, max_score: sol.max_score });
        }
        let factor = SpdFactor::damped(&eval.information)?;
        sol.ridged |= factor.ridged;
        let delta = factor.solve(&eval.score);
        let h0 = eval.value.h;
        let slack = 1e-12 * (1.0 + h0.abs());

        let mut step = 1.0;
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..=settings.step_halving_max {
            let cand = &psi + &delta * step;
            match model.evaluate(&cand, spec, Need::Value, false) {
                Ok(e) if e.value.h >= h0 - slack => {
                    accepted = Some(cand);
                    break;
                }
                Ok(_) => fallback = Some(cand),
                Err(Error::Diverged { .. } | Error::Evaluation { .. } | Error::Overflow(_)) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        // Out of halvings: take the smallest finite step and flag it.
        let next = match (accepted, fallback) {
            (Some(c), _) => c,
            (None, Some(c)) => {
                sol.halving_exhausted = true;
                c
            }
            (None, None) => {
                return Err(Error::NonConvergence { iterations: sol.iterations, max_score: sol.max_score });
            }
        };
        psi = next;
        eval = model.evaluate(&psi, spec, Need::Information, false)?;
        sol.iterations += 1;
        sol.max_score = max_abs(&eval.score);
        sol.h_trace.push(eval.value.h);
        sol.score_trace.push(sol.max_score);
    }

    if sol.max_score >= settings.inner_tol {
        return Err(Error::NonConvergence { iterations: sol.iterations, max_score: sol.max_score });
    }
    sol.psi = psi;
    sol.value = eval.value;
    sol.information = eval.information;
    Ok(sol)
}

/// Outcome of one dispersion update.
#[derive(Debug, Clone)]
pub struct DispersionStep {
    pub spec: FrailtySpec,
    pub inner: InnerSolution,
    pub profile: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some coordinate hit its cap.
    pub boundary: bool,
}

/// Profile objective on the unconstrained scale; the inner problem is re-solved
/// from `warm` for every trial dispersion.
struct ProfileObjective<'m, 'd> {
    model: &'m HlikModel<'d>,
    warm: &'m DVector<f64>,
    structure: Structure,
    settings: &'m FitSettings,
}

impl ProfileObjective<'_, '_> {
    fn solve(&self, u: &[f64]) -> Result<(FrailtySpec, bool, InnerSolution, f64)> {
        let (spec, clamped) = FrailtySpec::from_unconstrained(self.structure, u)?;
        let inner = inner_newton(self.model, self.warm, &spec, self.settings)?;
        let p = inner.profile()?;
        Ok((spec, clamped, inner, p))
    }

    fn profile(&self, u: &[f64]) -> f64 {
        self.solve(u).map_or(f64::NEG_INFINITY, |(_, _, _, p)| p)
    }
}

/// Maximizes `p_{θ,v}(h)` over the dispersion, starting from `spec`.
pub fn outer_dispersion(
    model: &HlikModel<'_>,
    warm: &DVector<f64>,
    spec: &FrailtySpec,
    settings: &FitSettings,
) -> Result<DispersionStep> {
    let objective = ProfileObjective { model, warm, structure: spec.structure(), settings };
    let u0 = spec.to_unconstrained();
    let res = optim::minimize(
        |u| {
            let p = objective.profile(u);
            if p.is_finite() {
                -p
            } else {
                f64::INFINITY
            }
        },
        &u0,
        &BfgsOptions::default(),
    );
    if !res.f.is_finite() {
        return Err(Error::OptimizerNonConvergence { iterations: res.iterations });
    }
    let x = snap_to_boundary(&objective, res.x, -res.f);
    let (spec, boundary, inner, profile) = objective.solve(&x)?;
    Ok(DispersionStep { spec, inner, profile, iterations: res.iterations, converged: res.converged, boundary })
}

/// The profile flattens out as a standard deviation goes to zero (or `|ρ|` to
/// one), so a quasi-Newton search stalls short of the edge. Move a coordinate
/// onto its cap when the profile there is at least as high.
fn snap_to_boundary(objective: &ProfileObjective<'_, '_>, mut x: Vec<f64>, mut best: f64) -> Vec<f64> {
    let names = objective.structure.dispersion_names();
    for (i, name) in names.iter().enumerate() {
        let edge = match *name {
            "sigma_beta" | "sigma_alpha" => crate::frailty::LOG_SIGMA_MIN,
            "rho" => x[i].signum() * crate::frailty::RHO_CAP.atanh(),
            _ => continue,
        };
        if x[i] == edge {
            continue;
        }
        let mut probe = x.clone();
        probe[i] = edge;
        let p = objective.profile(&probe);
        if p >= best - 1e-12 * (1.0 + best.abs()) {
            x = probe;
            best = best.max(p);
        }
    }
    x
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub family: BaselineFamily,
    pub structure: Structure,
    pub dispersion: FrailtySpec,
    pub theta: FixedParams,
    pub v: RandomEffects,
    pub se_beta: Vec<Option<f64>>,
    pub se_alpha: Vec<Option<f64>>,
    pub se_v_beta: Vec<Option<f64>>,
    pub se_v_alpha: Vec<Option<f64>>,
    /// In [`Structure::dispersion_names`] order.
    pub se_dispersion: Vec<Option<f64>>,
    pub hlik: HlikValue,
    /// `p_{θ,v}(h)` at the estimates.
    pub profile: f64,
    /// `−2 p_{θ,v}(h)`.
    pub deviance_profile: f64,
    /// `−2 Σ ℓ1`.
    pub cond_deviance: f64,
    pub df_r: usize,
    pub df_c: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_score: f64,
    pub last_change: f64,
    /// `p_{θ,v}(h)` after every outer iteration.
    pub profile_trace: Vec<f64>,
    pub scale_names: Vec<String>,
    pub shape_names: Vec<String>,
    pub cluster_labels: Vec<String>,
    pub cluster_sizes: Vec<usize>,
    pub covariates: Vec<CovariateInfo>,
    /// Fixed-effect block of `H⁻¹`, row-major, `(β, α)` order.
    pub fixed_covariance: Vec<Vec<f64>>,
    pub n: usize,
    pub events: usize,
    /// Largest observed time, for default reporting grids.
    pub time_max: f64,
    pub warnings: Vec<Warning>,
}

impl ModelFit {
    pub fn n_fixed(&self) -> usize {
        self.theta.beta.len() + self.theta.alpha.len()
    }

    /// `(name, estimate, standard error)` for each dispersion parameter.
    pub fn dispersion_table(&self) -> Vec<(&'static str, f64, Option<f64>)> {
        self.structure
            .dispersion_names()
            .iter()
            .zip(self.dispersion.values())
            .zip(self.se_dispersion.iter().copied().chain(core::iter::repeat(None)))
            .map(|((n, v), se)| (*n, v, se))
            .collect()
    }

    /// Estimates in `(β, α, dispersion)` order, the layout of simulation summaries.
    pub fn estimate_vector(&self) -> Vec<f64> {
        let mut out = self.theta.beta.clone();
        out.extend_from_slice(&self.theta.alpha);
        out.extend(self.dispersion.values());
        out
    }

    /// Standard errors in the order of [`estimate_vector`](Self::estimate_vector).
    pub fn se_vector(&self) -> Vec<Option<f64>> {
        let mut out = self.se_beta.clone();
        out.extend_from_slice(&self.se_alpha);
        out.extend_from_slice(&self.se_dispersion);
        out
    }
}

fn se_from_variance(v: f64) -> Option<f64> {
    (v.is_finite() && v > 0.0).then(|| v.sqrt())
}

fn max_change(a: &DVector<f64>, b: &DVector<f64>, sa: &FrailtySpec, sb: &FrailtySpec) -> f64 {
    let dpsi = (a - b).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    sa.values().iter().zip(sb.values()).fold(dpsi, |m, (x, y)| m.max((x - y).abs()))
}

/// Fits `structure` to a prepared design.
pub fn fit(family: BaselineFamily, design: &Design, structure: Structure, settings: &FitSettings) -> Result<ModelFit> {
    settings.validate()?;
    let fixed_model = HlikModel::new(family, design, Structure::None);
    let start = DVector::from_element(fixed_model.layout.dim(), 0.01);
    let theta0 = if settings.warm_start || structure == Structure::None {
        inner_newton(&fixed_model, &start, &FrailtySpec::None, settings)?.psi
    } else {
        start
    };

    let model = HlikModel::new(family, design, structure);
    let lay = model.layout;
    let mut psi = DVector::from_element(lay.dim(), 0.01);
    psi.rows_mut(0, lay.n_fixed()).copy_from(&theta0);

    let mut warnings = Vec::new();
    if design.q() < 2 && structure != Structure::None {
        warnings.push(Warning::SingleCluster);
    }

    if structure == Structure::None {
        let inner = inner_newton(&model, &psi, &FrailtySpec::None, settings)?;
        let profile = inner.profile()?;
        return finish(
            &model,
            inner,
            FrailtySpec::None,
            profile,
            Progress { converged: true, outer: 1, inner: 0, change: 0.0, trace: vec![profile], boundary: false },
            settings,
            warnings,
        );
    }

    let mut spec = FrailtySpec::initial(structure);
    let mut trace = Vec::new();
    let mut inner_total = 0;
    let mut converged = false;
    let mut change = f64::INFINITY;
    let mut outer = 0;
    let mut boundary = false;
    let mut current: Option<InnerSolution> = None;

    while outer < settings.max_outer {
        outer += 1;
        // Step 1: (θ, v) at fixed dispersion.
        let step1 = inner_newton(&model, &psi, &spec, settings)?;
        inner_total += step1.iterations;
        // Step 2: dispersion from the adjusted profile likelihood.
        let step2 = outer_dispersion(&model, &step1.psi, &spec, settings)?;
        if !step2.converged && !warnings.contains(&Warning::OptimizerNotConverged) {
            warnings.push(Warning::OptimizerNotConverged);
        }
        inner_total += step2.inner.iterations;
        change = max_change(&step2.inner.psi, &psi, &step2.spec, &spec);
        trace.push(step2.profile);
        boundary = step2.boundary;
        psi = step2.inner.psi.clone();
        spec = step2.spec;
        current = Some(step2.inner);
        if change < settings.outer_tol {
            converged = true;
            break;
        }
    }

    let inner = current.expect("at least one outer iteration");
    let profile = *trace.last().expect("at least one outer iteration");
    converged &= inner.max_score < settings.inner_tol;
    finish(
        &model,
        inner,
        spec,
        profile,
        Progress { converged, outer, inner: inner_total, change, trace, boundary },
        settings,
        warnings,
    )
}

/// Fits `structure` to a dataset with named covariate lists.
pub fn fit_dataset<S: AsRef<str>>(
    family: BaselineFamily,
    dataset: &Dataset,
    scale_covariates: &[S],
    shape_covariates: &[S],
    structure: Structure,
    settings: &FitSettings,
) -> Result<ModelFit> {
    let design = build_design(dataset, scale_covariates, shape_covariates)?;
    fit(family, &design, structure, settings)
}

struct Progress {
    converged: bool,
    outer: usize,
    inner: usize,
    change: f64,
    trace: Vec<f64>,
    boundary: bool,
}

fn finish(
    model: &HlikModel<'_>,
    inner: InnerSolution,
    spec: FrailtySpec,
    profile: f64,
    progress: Progress,
    settings: &FitSettings,
    mut warnings: Vec<Warning>,
) -> Result<ModelFit> {
    let design = model.design;
    let lay = model.layout;
    let structure = lay.structure;
    if inner.ridged {
        warnings.push(Warning::Ridge);
    }
    if inner.halving_exhausted {
        warnings.push(Warning::StepHalvingExhausted);
    }

    let factor = SpdFactor::new(&inner.information)?;
    let hinv = factor.inverse();
    let cond_info = model.cond_information(&inner.psi, &spec)?;
    let df_c = factor.solve_mat(&cond_info).trace();

    let (theta, v) = lay.unpack(&inner.psi, &spec);
    let se = |i: usize| se_from_variance(hinv[(i, i)]);
    let (ps, pa, q) = (lay.p_scale, lay.p_shape, lay.q);
    let se_beta: Vec<_> = (0..ps).map(se).collect();
    let se_alpha: Vec<_> = (ps..ps + pa).map(se).collect();
    let se_v_beta: Vec<_> = match lay.scale_block() {
        Some(o) => (o..o + q).map(se).collect(),
        None => vec![None; q],
    };
    let se_v_alpha: Vec<_> = match (lay.shape_block(), structure) {
        (Some(o), _) => (o..o + q).map(se).collect(),
        (None, Structure::Common) => se_v_beta.iter().map(|s| s.map(|x| x * spec.phi().abs())).collect(),
        _ => vec![None; q],
    };
    for (name, list) in [("beta", &se_beta), ("alpha", &se_alpha)] {
        for (i, s) in list.iter().enumerate() {
            if s.is_none() {
                warnings.push(Warning::MissingStandardError { parameter: format!("{name}{i}") });
            }
        }
    }
    let nf = lay.n_fixed();
    let fixed_covariance = (0..nf).map(|i| (0..nf).map(|j| hinv[(i, j)]).collect()).collect();

    let se_dispersion = dispersion_standard_errors(model, &inner.psi, &spec, settings, &mut warnings);

    for (name, value) in structure.dispersion_names().iter().zip(spec.values()) {
        let on_edge = match *name {
            "rho" => value.abs() >= crate::frailty::RHO_CAP,
            "phi" => false,
            _ => value < BOUNDARY_SIGMA,
        };
        if on_edge {
            warnings.push(Warning::Boundary { parameter: (*name).to_string(), value });
        }
    }
    let _ = progress.boundary;

    Ok(ModelFit {
        family: model.family,
        structure,
        dispersion: spec,
        theta,
        v,
        se_beta,
        se_alpha,
        se_v_beta,
        se_v_alpha,
        se_dispersion,
        hlik: inner.value,
        profile,
        deviance_profile: -2.0 * profile,
        cond_deviance: -2.0 * inner.value.ell1_sum,
        df_r: structure.df_r(),
        df_c,
        converged: progress.converged,
        outer_iterations: progress.outer,
        inner_iterations: progress.inner + inner.iterations,
        max_score: inner.max_score,
        last_change: progress.change,
        profile_trace: progress.trace,
        scale_names: design.scale_names.clone(),
        shape_names: design.shape_names.clone(),
        cluster_labels: design.cluster_labels.clone(),
        cluster_sizes: design.cluster_sizes.clone(),
        covariates: design.covariates.clone(),
        fixed_covariance,
        n: design.n(),
        events: design.events.iter().filter(|&&e| e).count(),
        time_max: design.times.iter().copied().fold(0.0, f64::max),
        warnings,
    })
}

/// Standard errors of the dispersion parameters from the inverse numerical
/// Hessian of `p_{θ,v}(h)` on the unconstrained scale, mapped back by the
/// delta method. A probe past a cap is evaluated at the cap.
fn dispersion_standard_errors(
    model: &HlikModel<'_>,
    psi: &DVector<f64>,
    spec: &FrailtySpec,
    settings: &FitSettings,
    warnings: &mut Vec<Warning>,
) -> Vec<Option<f64>> {
    let structure = spec.structure();
    let d = structure.df_r();
    if d == 0 {
        return Vec::new();
    }
    let objective = ProfileObjective { model, warm: psi, structure, settings };
    let u = spec.to_unconstrained();
    let hess = optim::numerical_hessian(&mut |x: &[f64]| -objective.profile(x), &u, settings.se_step);

    let free: Vec<usize> = (0..d).filter(|&i| hess[i][i].is_finite() && hess[i][i] > 0.0).collect();

    let mut out = vec![None; d];
    if !free.is_empty() {
        let m = DMatrix::from_fn(free.len(), free.len(), |i, j| hess[free[i]][free[j]]);
        if let Ok(f) = SpdFactor::new(&m) {
            let cov = f.inverse();
            let jac = spec.jacobian_diag();
            for (k, &i) in free.iter().enumerate() {
                out[i] = se_from_variance(cov[(k, k)]).map(|s| s * jac[i].abs());
            }
        }
    }
    for (i, s) in out.iter().enumerate() {
        if s.is_none() {
            warnings.push(Warning::MissingStandardError { parameter: structure.dispersion_names()[i].to_string() });
        }
    }
    out
}

/// Standard errors, `None` where unavailable.
pub type StandardErrors = Vec<Option<f64>>;

/// Standard errors `(se_θ, se_v, se_dispersion)` of a completed fit.
pub fn standard_errors(fit: &ModelFit) -> (StandardErrors, StandardErrors, StandardErrors) {
    let mut se_theta = fit.se_beta.clone();
    se_theta.extend_from_slice(&fit.se_alpha);
    let mut se_v = Vec::new();
    if fit.structure.has_scale_block() {
        se_v.extend_from_slice(&fit.se_v_beta);
    }
    if fit.structure.has_shape_block() {
        se_v.extend_from_slice(&fit.se_v_alpha);
    }
    (se_theta, se_v, fit.se_dispersion.clone())
}

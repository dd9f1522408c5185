//! Monte Carlo data generation under the MPR frailty model and scenario summaries.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineFamily;
use crate::error::{Error, Result};
use crate::estimation::{fit_dataset, FitSettings};
use crate::frailty::Structure;
use crate::model::{Dataset, SurvivalRecord};

/// AR(1) coefficient linking consecutive covariates.
pub const AR_COEF: f64 = 0.5;
/// Records drawn when calibrating the censoring bound.
pub const PILOT_SIZE: usize = 100_000;
/// Search interval for the censoring bound.
pub const CMAX_BOUNDS: (f64, f64) = (1e-3, 1e4);
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Stream reserved for the censoring pilot; replicate `b` uses stream `b + 1`.
const PILOT_STREAM: u64 = 0;

/// How many records each cluster receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterSizes {
    Fixed(usize),
    /// Cluster `j` of `q` gets `sizes[k]` for a share `proportions[k]` of the clusters.
    Mixture {
        sizes: Vec<usize>,
        proportions: Vec<f64>,
    },
}

impl ClusterSizes {
    /// Deterministic size of every cluster. Mixture counts are `floor(q·p)`
    /// with the remainder handed out by largest fractional part.
    pub fn layout(&self, q: usize) -> Result<Vec<usize>> {
        match self {
            Self::Fixed(n) => {
                if *n == 0 {
                    return Err(Error::InvalidData("cluster size must be at least 1".to_string()));
                }
                Ok(vec![*n; q])
            }
            Self::Mixture { sizes, proportions } => {
                if sizes.is_empty() || sizes.len() != proportions.len() {
                    return Err(Error::InvalidData("mixture needs one proportion per size".to_string()));
                }
                if sizes.contains(&0) || proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidData("mixture sizes must be ≥ 1 and proportions ≥ 0".to_string()));
                }
                let total: f64 = proportions.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidData("mixture proportions sum to zero".to_string()));
                }
                let exact: Vec<f64> = proportions.iter().map(|p| p / total * q as f64).collect();
                let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
                let mut order: Vec<usize> = (0..sizes.len()).collect();
                order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
                let mut left = q - counts.iter().sum::<usize>();
                for &k in order.iter().cycle() {
                    if left == 0 {
                        break;
                    }
                    counts[k] += 1;
                    left -= 1;
                }
                Ok(sizes.iter().zip(&counts).flat_map(|(&s, &c)| core::iter::repeat_n(s, c)).collect())
            }
        }
    }
}

fn default_replicates() -> usize {
    100
}

/// Truth and design of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub q: usize,
    pub n_i: ClusterSizes,
    /// Scale coefficients, intercept first; the covariate count is `len − 1`.
    pub beta_true: Vec<f64>,
    pub alpha_true: Vec<f64>,
    pub sigma_beta: f64,
    pub sigma_alpha: f64,
    pub rho: f64,
    pub censor_rate: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub family: BaselineFamily,
}

impl ScenarioSpec {
    /// The generating model used throughout the desk-scale study.
    pub fn reference(q: usize, n_i: usize, censor_rate: f64) -> Self {
        Self {
            q,
            n_i: ClusterSizes::Fixed(n_i),
            beta_true: vec![1.0, -0.5, 0.5],
            alpha_true: vec![0.5, 0.5, -0.5],
            sigma_beta: 1.0,
            sigma_alpha: 0.5,
            rho: -0.5,
            censor_rate,
            replicates: default_replicates(),
            seed: 1,
            family: BaselineFamily::Weibull,
        }
    }

    pub fn p(&self) -> usize {
        self.beta_true.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::InvalidData("a scenario needs at least 2 clusters".to_string()));
        }
        if !(self.censor_rate > 0.0 && self.censor_rate < 1.0) {
            return Err(Error::Domain { what: "censor_rate", value: self.censor_rate });
        }
        if self.beta_true.is_empty() || self.beta_true.len() != self.alpha_true.len() {
            return Err(Error::Dimension("beta_true and alpha_true need the same non-zero length".to_string()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidData("replicates must be at least 1".to_string()));
        }
        check_dispersion(self.sigma_beta, self.sigma_alpha, self.rho)?;
        self.n_i.layout(self.q).map(|_| ())
    }

    /// Covariate names of generated datasets.
    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.p()).map(|k| format!("x{k}")).collect()
    }

    /// Truth for a named parameter of a fitted structure.
    pub fn truth(&self, name: &str) -> Option<f64> {
        let idx = |prefix: &str| name.strip_prefix(prefix).and_then(|k| k.parse::<usize>().ok());
        match name {
            "sigma_beta" => Some(self.sigma_beta),
            "sigma_alpha" => Some(self.sigma_alpha),
            "rho" => Some(self.rho),
            _ => idx("beta")
                .and_then(|k| self.beta_true.get(k).copied())
                .or_else(|| idx("alpha").and_then(|k| self.alpha_true.get(k).copied())),
        }
    }
}

fn check_dispersion(sigma_beta: f64, sigma_alpha: f64, rho: f64) -> Result<()> {
    if !(sigma_beta.is_finite() && sigma_beta >= 0.0) {
        return Err(Error::Domain { what: "sigma_beta", value: sigma_beta });
    }
    if !(sigma_alpha.is_finite() && sigma_alpha >= 0.0) {
        return Err(Error::Domain { what: "sigma_alpha", value: sigma_alpha });
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain { what: "rho", value: rho });
    }
    Ok(())
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `n` rows of `p` marginally standard normal covariates linked by an AR(1)
/// recursion with coefficient 0.5.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let innov = (1.0 - AR_COEF * AR_COEF).sqrt();
    (0..n)
        .map(|_| {
            let mut row = Vec::with_capacity(p);
            for k in 0..p {
                let e: f64 = rng.sample(StandardNormal);
                row.push(if k == 0 { e } else { AR_COEF * row[k - 1] + innov * e });
            }
            row
        })
        .collect()
}

/// `q` bivariate normal frailty pairs `(v_β, v_α)`.
pub fn gen_frailties<R: Rng + ?Sized>(
    q: usize,
    sigma_beta: f64,
    sigma_alpha: f64,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    check_dispersion(sigma_beta, sigma_alpha, rho)?;
    let c = (1.0 - rho * rho).sqrt();
    Ok((0..q)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            (sigma_beta * z1, sigma_alpha * (rho * z1 + c * z2))
        })
        .collect())
}

/// Inverse transform `t = [Λ0⁻¹(−log u / τ)]^{1/γ}`.
pub fn survival_time(family: BaselineFamily, tau: f64, gamma: f64, u: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain { what: "tau", value: tau });
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain { what: "gamma", value: gamma });
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain { what: "u", value: u });
    }
    let s = family.inverse_cumulative(-u.ln() / tau)?;
    Ok(s.powf(1.0 / gamma))
}

/// One event time per `(τ, γ)` pair.
pub fn gen_survival_times<R: Rng + ?Sized>(
    family: BaselineFamily,
    tau: &[f64],
    gamma: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    tau.iter().zip(gamma).map(|(&t, &g)| survival_time(family, t, g, open_unit(rng))).collect()
}

fn linear(coef: &[f64], x: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
}

/// Event time of a record with covariates `x` and frailty pair `v`.
fn draw_time<R: Rng + ?Sized>(spec: &ScenarioSpec, x: &[f64], v: (f64, f64), rng: &mut R) -> Result<f64> {
    let tau = (linear(&spec.beta_true, x) + v.0).exp();
    let gamma = (linear(&spec.alpha_true, x) + v.1).exp();
    survival_time(spec.family, tau, gamma, open_unit(rng))
}

/// Expected censored share when `C ~ U(0, c)` and censoring means `C < T`.
fn censored_share(times: &[f64], c: f64) -> f64 {
    times.iter().map(|&t| t.min(c) / c).sum::<f64>() / times.len() as f64
}

/// Upper bound `c_max` of the uniform censoring distribution that yields the
/// target censored share, found by bisection on a pilot sample.
pub fn calibrate_censoring<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<f64> {
    spec.validate()?;
    let p = spec.p();
    let mut times = Vec::with_capacity(PILOT_SIZE);
    for _ in 0..PILOT_SIZE {
        let x = &gen_covariates(1, p, rng)[0];
        let v = gen_frailties(1, spec.sigma_beta, spec.sigma_alpha, spec.rho, rng)?[0];
        times.push(draw_time(spec, x, v, rng)?);
    }
    calibrate_from_pilot(&times, spec.censor_rate)
}

/// Bisection of the censored share (non-increasing in `c`) against `target`.
pub fn calibrate_from_pilot(times: &[f64], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = CMAX_BOUNDS;
    let err = Error::Calibration { target, low: lo, high: hi };
    if times.is_empty() || censored_share(times, hi) > target || censored_share(times, lo) < target {
        return Err(err);
    }
    // Geometric bisection: the bounds span seven decades.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if censored_share(times, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// One generated dataset together with its realized censoring share.
pub fn gen_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, c_max: f64, rng: &mut R) -> Result<Dataset> {
    let sizes = spec.n_i.layout(spec.q)?;
    let frailties = gen_frailties(spec.q, spec.sigma_beta, spec.sigma_alpha, spec.rho, rng)?;
    let mut records = Vec::with_capacity(sizes.iter().sum());
    for (i, (&n, &v)) in sizes.iter().zip(&frailties).enumerate() {
        for x in gen_covariates(n, spec.p(), rng) {
            let t = draw_time(spec, &x, v, rng)?;
            let c = c_max * open_unit(rng);
            records.push(SurvivalRecord {
                cluster: format!("{}", i + 1),
                time: t.min(c),
                event: t <= c,
                covariates: x,
            });
        }
    }
    Dataset::new(spec.covariate_names(), records)
}

/// RNG of replicate `index` (stream `index + 1` of the master seed).
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// RNG of the censoring pilot.
pub fn pilot_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PILOT_STREAM);
    rng
}

/// What one replicate produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub censoring: f64,
    /// In [`crate::estimation::ModelFit::estimate_vector`] order; `None` when the fit failed.
    pub estimates: Option<Vec<f64>>,
    pub standard_errors: Option<Vec<Option<f64>>>,
    pub failure: Option<String>,
}

/// Generates and fits replicate `index`.
pub fn run_replicate(
    spec: &ScenarioSpec,
    structure: Structure,
    settings: &FitSettings,
    c_max: f64,
    index: usize,
) -> ReplicateOutcome {
    let mut rng = replicate_rng(spec.seed, index);
    let data = match gen_dataset(spec, c_max, &mut rng) {
        Ok(d) => d,
        Err(e) => {
            return ReplicateOutcome {
                index,
                censoring: f64::NAN,
                estimates: None,
                standard_errors: None,
                failure: Some(e.to_string()),
            }
        }
    };
    let censoring = data.censoring_fraction();
    let names = spec.covariate_names();
    match fit_dataset(spec.family, &data, &names, &names, structure, settings) {
        Ok(f) if f.converged => ReplicateOutcome {
            index,
            censoring,
            estimates: Some(f.estimate_vector()),
            standard_errors: Some(f.se_vector()),
            failure: None,
        },
        Ok(_) => ReplicateOutcome {
            index,
            censoring,
            estimates: None,
            standard_errors: None,
            failure: Some("did not converge".to_string()),
        },
        Err(e) => {
            ReplicateOutcome { index, censoring, estimates: None, standard_errors: None, failure: Some(e.to_string()) }
        }
    }
}

/// Mean, empirical SD and mean reported SE of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: Option<f64>,
    pub mean: f64,
    /// Sample standard deviation of the estimates; `None` with a single replicate.
    pub se: Option<f64>,
    /// Average reported standard error over replicates that produced one.
    pub see: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub structure: Structure,
    pub c_max: f64,
    pub target_censoring: f64,
    /// Mean realized censoring share over all generated replicates.
    pub realized_censoring: f64,
    pub replicates: usize,
    pub converged: usize,
    pub failed: usize,
    pub parameters: Vec<ParameterSummary>,
}

/// Parameter names in estimate-vector order for `structure`.
pub fn parameter_names(spec: &ScenarioSpec, structure: Structure) -> Vec<String> {
    let k = spec.beta_true.len();
    (0..k)
        .map(|j| format!("beta{j}"))
        .chain((0..k).map(|j| format!("alpha{j}")))
        .chain(structure.dispersion_names().iter().map(|s| s.to_string()))
        .collect()
}

/// Reduces replicate outcomes; the order of `outcomes` does not matter.
pub fn summarize(
    spec: &ScenarioSpec,
    structure: Structure,
    c_max: f64,
    outcomes: &[ReplicateOutcome],
) -> Result<ScenarioSummary> {
    let mut sorted: Vec<&ReplicateOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.index);
    let total = sorted.len();
    let ok: Vec<&ReplicateOutcome> = sorted.iter().copied().filter(|o| o.estimates.is_some()).collect();
    let failed = total - ok.len();
    if ok.is_empty() || failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::Scenario { failed, total });
    }
    let names = parameter_names(spec, structure);
    let parameters = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let est: Vec<f64> = ok.iter().map(|o| o.estimates.as_ref().unwrap()[j]).collect();
            let m = est.len() as f64;
            let mean = est.iter().sum::<f64>() / m;
            let se = (est.len() > 1).then(|| (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt());
            let reported: Vec<f64> = ok
                .iter()
                .filter_map(|o| o.standard_errors.as_ref().and_then(|s| s.get(j).copied().flatten()))
                .collect();
            let see = (!reported.is_empty()).then(|| reported.iter().sum::<f64>() / reported.len() as f64);
            ParameterSummary { name: name.clone(), truth: spec.truth(name), mean, se, see }
        })
        .collect();
    let realized: Vec<f64> = sorted.iter().map(|o| o.censoring).filter(|c| c.is_finite()).collect();
    let realized_censoring =
        if realized.is_empty() { f64::NAN } else { realized.iter().sum::<f64>() / realized.len() as f64 };
    Ok(ScenarioSummary {
        structure,
        c_max,
        target_censoring: spec.censor_rate,
        realized_censoring,
        replicates: total,
        converged: ok.len(),
        failed,
        parameters,
    })
}

/// Runs every replicate in turn.
pub fn run_scenario(spec: &ScenarioSpec, structure: Structure, settings: &FitSettings) -> Result<ScenarioSummary> {
    spec.validate()?;
    let c_max = calibrate_censoring(spec, &mut pilot_rng(spec.seed))?;
    let outcomes: Vec<_> = (0..spec.replicates).map(|b| run_replicate(spec, structure, settings, c_max, b)).collect();
    summarize(spec, structure, c_max, &outcomes)
}

#![allow(dead_code)]

use mprfrail_core::simulation::{calibrate_censoring, gen_dataset, pilot_rng, replicate_rng, ScenarioSpec};
use mprfrail_core::{build_design, Dataset, Design};

/// One replicate of the reference generating model.
pub fn reference_data(q: usize, n_i: usize, censor_rate: f64, seed: u64) -> Dataset {
    let spec = ScenarioSpec { seed, ..ScenarioSpec::reference(q, n_i, censor_rate) };
    let c = calibrate_censoring(&spec, &mut pilot_rng(seed)).unwrap();
    gen_dataset(&spec, c, &mut replicate_rng(seed, 0)).unwrap()
}

pub fn reference_design(q: usize, n_i: usize, censor_rate: f64, seed: u64) -> Design {
    build_design(&reference_data(q, n_i, censor_rate, seed), &["x1", "x2"], &["x1", "x2"]).unwrap()
}

/// Weibull MPR log-likelihood without frailty, written out directly:
/// `δ(log τ + log γ + (γ−1) log t) − τ t^γ`.
pub fn weibull_loglik(d: &Design, beta: &[f64], alpha: &[f64]) -> f64 {
    (0..d.n())
        .map(|i| {
            let eta: f64 = (0..d.p_scale()).map(|j| d.x_scale[(i, j)] * beta[j]).sum();
            let zeta: f64 = (0..d.p_shape()).map(|j| d.x_shape[(i, j)] * alpha[j]).sum();
            let (t, g) = (d.times[i], zeta.exp());
            let ev = if d.events[i] { eta + zeta + (g - 1.0) * t.ln() } else { 0.0 };
            ev - eta.exp() * t.powf(g)
        })
        .sum()
}

pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            p[i] += h;
            let up = f(&p);
            p[i] -= 2.0 * h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let e = |si: f64, sj: f64| {
                let mut p = x.to_vec();
                p[i] += si * h;
                p[j] += sj * h;
                f(&p)
            };
            out[i][j] = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| r.iter().copied().chain([bi]).collect()).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        x[r] = (m[r][n] - (r + 1..n).map(|k| m[r][k] * x[k]).sum::<f64>()) / m[r][r];
    }
    x
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> =
        (0..n).map(|j| solve(a, &(0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>())).collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Maximizes `f` by gradient ascent warm-up followed by Newton steps on
/// finite-difference derivatives.
pub fn maximize_fd(f: &dyn Fn(&[f64]) -> f64, x0: &[f64]) -> Vec<f64> {
    let mut x = x0.to_vec();
    for _ in 0..200 {
        let g = fd_gradient(f, &x, 1e-6);
        let h = fd_hessian(f, &x, 1e-4);
        let neg: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let step = solve(&neg, &g);
        let mut t = 1.0;
        let f0 = f(&x);
        loop {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            if f(&cand) >= f0 - 1e-12 * f0.abs() || t < 1e-10 {
                x = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().all(|s| s.abs() < 1e-10) {
            break;
        }
    }
    x
}

/// Clustered Weibull data with two binary covariates `trt`, `z` and one
/// continuous `age`; scale frailty 0.7, shape frailty 0.3.
pub fn binary_data(sizes: &[usize], seed: u64) -> Dataset {
    use mprfrail_core::simulation::survival_time;
    use mprfrail_core::{BaselineFamily, SurvivalRecord};
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        let vb: f64 = 0.7 * rng.sample::<f64, _>(StandardNormal);
        let va: f64 = 0.3 * rng.sample::<f64, _>(StandardNormal);
        for _ in 0..n {
            let trt = f64::from(rng.random_bool(0.5));
            let z = f64::from(rng.random_bool(0.3));
            let age: f64 = rng.sample(StandardNormal);
            let tau = (0.2 - 0.6 * trt + 0.4 * z + 0.3 * age + vb).exp();
            let gamma = (0.1 - 0.3 * trt + 0.2 * z + va).exp();
            let t = survival_time(BaselineFamily::Weibull, tau, gamma, rng.random_range(1e-12..1.0)).unwrap();
            let cens = rng.random_range(0.0..4.0);
            records.push(SurvivalRecord {
                cluster: format!("c{c}"),
                time: t.min(cens).max(1e-8),
                event: t <= cens,
                covariates: vec![trt, z, age],
            });
        }
    }
    Dataset::new(vec!["trt".into(), "z".into(), "age".into()], records).unwrap()
}

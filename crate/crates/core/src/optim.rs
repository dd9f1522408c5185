//! Small quasi-Newton minimizer for the dispersion search.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once every gradient component is below this.
    pub gtol: f64,
    /// Stop once an accepted step moves every coordinate less than this.
    pub xtol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Largest move of any coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, gtol: 1e-5, xtol: 1e-9, fd_step: 1e-5, max_step: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient. Falls back to a one-sided difference when one
/// neighbour is infeasible (infinite), and to zero when both are.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, rel_step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let dn = f(&probe);
        probe[i] = x[i];
        g[i] = match (up.is_finite(), dn.is_finite()) {
            (true, true) => (up - dn) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - dn) / h,
            (false, false) => 0.0,
        };
    }
    g
}

/// Central-difference Hessian.
pub fn numerical_hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let f0 = f(x);
    let mut hess = vec![vec![0.0; d]; d];
    let mut p = x.to_vec();
    for i in 0..d {
        p[i] = x[i] + step;
        let up = f(&p);
        p[i] = x[i] - step;
        let dn = f(&p);
        p[i] = x[i];
        hess[i][i] = (up - 2.0 * f0 + dn) / (step * step);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * step;
                p[j] = x[j] + sj * step;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v =
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * step * step);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f` by BFGS with finite-difference gradients and backtracking.
/// `f` may return `+∞` to reject a point.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if d == 0 || !fx.is_finite() {
        return BfgsResult { x, f: fx, grad: vec![0.0; d], iterations: 0, converged: d == 0 };
    }
    let mut g = numerical_gradient(&mut f, &x, fx, opts.fd_step);
    let identity = |d: usize| {
        let mut m = vec![vec![0.0; d]; d];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    };
    let mut hinv = identity(d);
    let mut fresh = true;

    for it in 0..opts.max_iter {
        if max_abs(&g) < opts.gtol {
            return BfgsResult { x, f: fx, grad: g, iterations: it, converged: true };
        }
        let mut dir: Vec<f64> = hinv.iter().map(|row| -dot(row, &g)).collect();
        if dot(&dir, &g) >= 0.0 {
            hinv = identity(d);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
        }
        let longest = max_abs(&dir);
        if longest > opts.max_step {
            dir.iter_mut().for_each(|v| *v *= opts.max_step / longest);
        }
        let slope = dot(&dir, &g);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if fresh {
                return BfgsResult { x, f: fx, grad: g, iterations: it, converged: false };
            }
            hinv = identity(d);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let gn = numerical_gradient(&mut f, &xn, fxn, opts.fd_step);
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let moved = max_abs(&s);
        x = xn;
        fx = fxn;
        g = gn;
        if moved < opts.xtol {
            return BfgsResult { x, f: fx, grad: g, iterations: it + 1, converged: true };
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if fresh {
                // Scale the initial inverse Hessian to the observed curvature.
                let scale = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= scale));
            }
            let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..d {
                for j in 0..d {
                    hinv[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
    }
    BfgsResult { x, f: fx, grad: g, iterations: opts.max_iter, converged: false }
}

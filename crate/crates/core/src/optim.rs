//! Damped Gauss–Newton (Levenberg–Marquardt) least squares and a BFGS
//! minimizer. Both are small dense implementations sized for the handful of
//! parameters used in this crate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// A least-squares problem with already-weighted residuals rᵢ = (yᵢ − fᵢ)/σᵢ.
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major `n_residuals × n_params` Jacobian of the residuals.
    fn jacobian(&self, p: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once ‖Δp‖ ≤ tol·(‖p‖ + tol).
    pub relative_step_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, relative_step_tol: 1e-9, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Σ rᵢ² at the optimum.
    pub chi_squared: f64,
    /// Row-major (JᵀJ)⁻¹; empty when JᵀJ is singular.
    pub covariance: Vec<f64>,
    pub iterations: usize,
}

impl LmReport {
    /// 1σ uncertainties from the covariance diagonal (NaN if unavailable).
    pub fn std_errors(&self) -> Vec<f64> {
        let n = self.params.len();
        if self.covariance.len() != n * n {
            return vec![f64::NAN; n];
        }
        (0..n).map(|i| math::sqrt(self.covariance[i * n + i].max(0.0))).collect()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn normal_equations(j: &[f64], r: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for row in 0..m {
        let jr = &j[row * n..(row + 1) * n];
        for a in 0..n {
            jtr[a] += jr[a] * r[row];
            for b in a..n {
                jtj[a * n + b] += jr[a] * jr[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a * n + b] = jtj[b * n + a];
        }
    }
    (jtj, jtr)
}

/// Minimize Σ rᵢ(p)² from `p0`.
///
/// On budget exhaustion returns [`Error::NotConverged`] carrying the best
/// parameters found.
pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(problem: &P, p0: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if p0.len() != n {
        return Err(Error::input("initial parameter vector has the wrong length"));
    }
    if m < n {
        return Err(Error::input("fewer residuals than free parameters"));
    }
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    let mut j = vec![0.0; m * n];
    problem.residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::Numerical("residuals are not finite at the starting point".into()));
    }
    let mut lambda = opts.initial_damping;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    for iter in 1..=opts.max_iterations {
        problem.jacobian(&p, &mut j);
        let (jtj, jtr) = normal_equations(&j, &r, m, n);
        let gmax = jtr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax <= 1e-15 * (1.0 + cost) {
            return Ok(finish(p, cost, &jtj, n, iter));
        }
        // inner loop: raise damping until the step reduces the cost
        loop {
            let mut a = jtj.clone();
            for k in 0..n {
                let d = jtj[k * n + k].max(1e-12);
                a[k * n + k] += lambda * d;
            }
            let neg: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = math::solve(&a, &neg, n) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return Err(Error::Numerical("damped normal equations are singular".into()));
                }
                continue;
            };
            let step_norm = math::sqrt(sum_sq(&step));
            let p_norm = math::sqrt(sum_sq(&p));
            let small = step_norm <= opts.relative_step_tol * (p_norm + opts.relative_step_tol);
            for k in 0..n {
                trial[k] = p[k] + step[k];
            }
            problem.residuals(&trial, &mut r_trial);
            let new_cost = sum_sq(&r_trial);
            if new_cost.is_finite() && new_cost <= cost {
                p.copy_from_slice(&trial);
                core::mem::swap(&mut r, &mut r_trial);
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                if small {
                    problem.jacobian(&p, &mut j);
                    let (jtj, _) = normal_equations(&j, &r, m, n);
                    return Ok(finish(p, cost, &jtj, n, iter));
                }
                break;
            }
            if small {
                return Ok(finish(p, cost, &jtj, n, iter));
            }
            lambda *= 4.0;
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iterations, cost, best: p })
}

fn finish(params: Vec<f64>, chi_squared: f64, jtj: &[f64], n: usize, iterations: usize) -> LmReport {
    let covariance = math::invert(jtj, n).unwrap_or_default();
    LmReport { params, chi_squared, covariance, iterations }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Converged once max |∂f/∂xᵢ| ≤ this.
    pub gradient_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gradient_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f`, which returns the objective and writes the gradient.
/// Always returns the best iterate; `converged` says whether the gradient
/// tolerance was met.
pub fn bfgs(f: impl Fn(&[f64], &mut [f64]) -> f64, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsReport> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut h = identity(n);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut first = true;
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for iter in 0..opts.max_iterations {
        let gn = inf_norm(&g);
        if gn <= opts.gradient_tol {
            return Ok(BfgsReport { x, value: fx, gradient_norm: gn, iterations: iter, converged: true });
        }
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|k| h[i * n + k] * g[k]).sum::<f64>()).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + t * d[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * t * slope {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-14 {
                    if first {
                        let yy: f64 = y.iter().map(|v| v * v).sum();
                        h = identity(n);
                        h.iter_mut().for_each(|v| *v *= sy / yy);
                        first = false;
                    }
                    bfgs_update(&mut h, &s, &y, sy, n);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent possible along any scaled step; x is the best iterate
            let gn = inf_norm(&g);
            return Ok(BfgsReport { x, value: fx, gradient_norm: gn, iterations: iter + 1, converged: gn <= opts.gradient_tol });
        }
    }
    let gn = inf_norm(&g);
    Ok(BfgsReport { x, value: fx, gradient_norm: gn, iterations: opts.max_iterations, converged: gn <= opts.gradient_tol })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|k| h[i * n + k] * y[k]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for k in 0..n {
            h[i * n + k] += -rho * (hy[i] * s[k] + s[i] * hy[k]) + (rho * rho * yhy + rho) * s[i] * s[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Exponential {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                out[i] = y - p[0] * math::exp(-p[1] * t);
            }
        }
        fn jacobian(&self, p: &[f64], out: &mut [f64]) {
            for (i, &t) in self.t.iter().enumerate() {
                let e = math::exp(-p[1] * t);
                out[2 * i] = -e;
                out[2 * i + 1] = p[0] * t * e;
            }
        }
    }

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let y = t.iter().map(|&t| 3.0 * math::exp(-0.7 * t)).collect();
        let prob = Exponential { t, y };
        let rep = levenberg_marquardt(&prob, &[1.0, 0.1], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 3.0).abs() < 1e-8);
        assert!((rep.params[1] - 0.7).abs() < 1e-8);
        assert!(rep.chi_squared < 1e-16);
    }

    #[test]
    fn lm_reports_budget_exhaustion() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let y = t.iter().map(|&t| 3.0 * math::exp(-0.7 * t)).collect();
        let prob = Exponential { t, y };
        let opts = LmOptions { max_iterations: 1, ..Default::default() };
        match levenberg_marquardt(&prob, &[1.0, 3.0], &opts) {
            Err(Error::NotConverged { best, .. }) => assert_eq!(best.len(), 2),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
        };
        let rep = bfgs(f, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.x[0] - 1.0).abs() < 1e-6 && (rep.x[1] - 1.0).abs() < 1e-6);
    }
}

//! Spectral projected gradient for
//! `min ||y - A x||_2  s.t.  sum_g |x_g| <= tau`, where each complex cell is
//! one (Re, Im) group.

use super::{mixed_norm, BornOperator, ContrastVector};
use crate::error::{Error, Result};
use crate::par;
use num_complex::Complex64;

/// Euclidean projection onto the group-l1 ball of radius `tau`: soft
/// thresholding of the cell magnitudes, phases kept.
pub fn project_group_l1(x: &[Complex64], tau: f64) -> Vec<Complex64> {
    if tau <= 0.0 {
        return vec![Complex64::new(0.0, 0.0); x.len()];
    }
    if mixed_norm(x) <= tau {
        return x.to_vec();
    }
    let mut mags: Vec<f64> = x.iter().map(|c| c.norm()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let (mut cum, mut theta) = (0.0, 0.0);
    for (i, m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - tau) / (i + 1) as f64;
        if t >= *m {
            break;
        }
        theta = t;
    }
    // summation order can leave theta a rounding error below zero
    let theta = theta.max(0.0);
    x.iter()
        .map(|c| {
            let n = c.norm();
            if n > theta && n > 0.0 {
                c * ((n - theta) / n)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpgOptions {
    pub max_iter: usize,
    /// Stop when `||P(x - g / L) - x|| <= tol * max(||x||, tau / sqrt(n))`,
    /// with `L` the largest eigenvalue of `A^H A`.
    pub tol: f64,
    /// Length of the non-monotone line-search memory.
    pub memory: usize,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions {
            max_iter: 5000,
            tol: 1e-10,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgResult {
    pub contrast: ContrastVector,
    /// `0.5 ||y - A x||^2` after every accepted step, starting at `x = 0`.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.re * q.re + p.im * q.im).sum()
}

fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

struct Eval {
    f: f64,
    grad: Vec<Complex64>,
    resid: f64,
}

fn evaluate(a: &BornOperator, y: &[Complex64], x: &[Complex64]) -> Eval {
    let r: Vec<Complex64> = a.apply(x).expect("dims").iter().zip(y).map(|(p, q)| p - q).collect();
    let resid = norm2(&r);
    Eval {
        f: 0.5 * resid * resid,
        grad: a.adjoint(&r).expect("dims"),
        resid,
    }
}

/// Solves the tau-constrained problem from `x = 0` with Barzilai-Borwein steps
/// and a Grippo-Lampariello-Lucidi non-monotone Armijo search.
pub fn estimate_contrast(a: &BornOperator, y: &[Complex64], tau: f64, opts: &SpgOptions) -> Result<SpgResult> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::arg(format!("tau must be finite and non-negative, got {tau}")));
    }
    if y.len() != a.n_measurements() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} measurements", a.n_measurements()),
            got: format!("{}", y.len()),
        });
    }
    if y.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::arg("measurements must be finite"));
    }
    let n = a.n_cells();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut cur = evaluate(a, y, &x);
    let mut objective = vec![cur.f];
    if tau == 0.0 {
        return Ok(SpgResult {
            contrast: ContrastVector { chi: x },
            objective,
            iterations: 0,
            converged: true,
            residual_norm: cur.resid,
        });
    }
    let lip = a.norm_sq_estimate();
    if lip == 0.0 {
        return Err(Error::arg("operator is identically zero"));
    }
    let (lambda_min, lambda_max) = (1e-10 / lip, 1e10 / lip);
    let mut lambda = 1.0 / lip;
    let floor = tau / (n as f64).sqrt();
    let memory = opts.memory.max(1);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it;
        let unit: Vec<Complex64> = x.iter().zip(&cur.grad).map(|(p, g)| p - g / lip).collect();
        let pg: Vec<Complex64> = project_group_l1(&unit, tau).iter().zip(&x).map(|(p, q)| p - q).collect();
        if norm2(&pg) <= opts.tol * norm2(&x).max(floor) {
            converged = true;
            break;
        }
        let trial: Vec<Complex64> = x.iter().zip(&cur.grad).map(|(p, g)| p - g * lambda).collect();
        let d: Vec<Complex64> = project_group_l1(&trial, tau).iter().zip(&x).map(|(p, q)| p - q).collect();
        let gtd = re_dot(&cur.grad, &d);
        if gtd >= 0.0 {
            converged = true;
            break;
        }
        let f_ref = objective.iter().rev().take(memory).fold(f64::NEG_INFINITY, |m, &f| m.max(f));
        let mut alpha = 1.0;
        let (next_x, next) = loop {
            let xn: Vec<Complex64> = x.iter().zip(&d).map(|(p, q)| p + q * alpha).collect();
            let ev = evaluate(a, y, &xn);
            if ev.f <= f_ref + 1e-4 * alpha * gtd || alpha < 1e-12 {
                break (xn, ev);
            }
            // safeguarded quadratic backtrack
            let q = -0.5 * alpha * alpha * gtd / (ev.f - cur.f - alpha * gtd);
            alpha = if q >= 0.1 * alpha && q <= 0.5 * alpha { q } else { alpha / 2.0 };
        };
        let s: Vec<Complex64> = next_x.iter().zip(&x).map(|(p, q)| p - q).collect();
        let yk: Vec<Complex64> = next.grad.iter().zip(&cur.grad).map(|(p, q)| p - q).collect();
        let sty = re_dot(&s, &yk);
        lambda = if sty <= 0.0 {
            lambda_max
        } else {
            (re_dot(&s, &s) / sty).clamp(lambda_min, lambda_max)
        };
        x = next_x;
        cur = next;
        objective.push(cur.f);
        iterations = it + 1;
    }
    Ok(SpgResult {
        contrast: ContrastVector { chi: x },
        objective,
        iterations,
        converged,
        residual_norm: cur.resid,
    })
}

/// `n` points logarithmically spaced from `lo` to `hi` inclusive.
pub fn log_tau_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(Error::arg("need 0 < lo <= hi and n >= 1"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauPoint {
    pub tau: f64,
    pub residual_norm: f64,
    pub mixed_norm: f64,
}

/// Residual curve over a list of budgets; the solves run in parallel.
pub fn tau_sweep(a: &BornOperator, y: &[Complex64], taus: &[f64], opts: &SpgOptions) -> Result<Vec<TauPoint>> {
    par::map_slice(taus, |&tau| {
        estimate_contrast(a, y, tau, opts).map(|r| TauPoint {
            tau,
            residual_norm: r.residual_norm,
            mixed_norm: r.contrast.mixed_norm(),
        })
    })
    .into_iter()
    .collect()
}

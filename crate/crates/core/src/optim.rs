//! First-order and quasi-Newton optimizers over flat parameter vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Objective value, gradient and whatever else the caller wants to keep
/// from the evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub value: f64,
    pub grad: Vec<f64>,
    pub payload: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected update of `x` along `g`.
    pub fn update(&mut self, x: &mut [f64], g: &[f64]) {
        let c = self.cfg;
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t as i32);
        let b2t = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            x[i] -= c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
    /// Step size of the plain gradient fallback.
    pub fallback_lr: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            fallback_lr: 1e-2,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.max_line_search == 0 {
            return config_err("L-BFGS history and line-search budget must be positive");
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return config_err(format!("Wolfe constants need 0 < c1 < c2 < 1, got {} and {}", self.c1, self.c2));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// What one L-BFGS iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationInfo {
    pub evaluations: usize,
    pub step: f64,
    /// The line search failed and a fixed gradient step was taken.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lbfgs {
    pub cfg: LbfgsConfig,
    pub s: VecDeque<Vec<f64>>,
    pub y: VecDeque<Vec<f64>>,
}

struct Trial<T> {
    alpha: f64,
    eval: Evaluation<T>,
    dphi: f64,
}

impl Lbfgs {
    pub fn new(cfg: LbfgsConfig) -> Self {
        Self {
            cfg,
            s: VecDeque::new(),
            y: VecDeque::new(),
        }
    }

    /// Two-loop recursion: `−H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; k];
        let mut rho = vec![0.0; k];
        for i in (0..k).rev() {
            rho[i] = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// One iteration from `x` with `cur` evaluated there. On return `x` and
    /// `cur` hold the new point.
    pub fn iterate<T: Clone>(
        &mut self,
        x: &mut Vec<f64>,
        cur: &mut Evaluation<T>,
        objective: &mut dyn FnMut(&[f64]) -> Result<Evaluation<T>>,
    ) -> Result<IterationInfo> {
        let g = cur.grad.clone();
        if g.iter().all(|&v| v == 0.0) {
            return Ok(IterationInfo {
                evaluations: 0,
                step: 0.0,
                fallback: false,
            });
        }
        let mut d = self.direction(&g);
        let mut d0 = dot(&g, &d);
        if !(d0 < 0.0) {
            self.s.clear();
            self.y.clear();
            d = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &d);
        }
        let a1 = if self.s.is_empty() {
            (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };

        let x0 = x.clone();
        let mut evals = 0;
        let mut phi = |alpha: f64| -> Result<Trial<T>> {
            let xa: Vec<f64> = x0.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let eval = objective(&xa)?;
            let dphi = dot(&eval.grad, &d);
            Ok(Trial { alpha, eval, dphi })
        };
        let found = strong_wolfe(&mut phi, cur.value, d0, a1, &self.cfg, &mut evals)?;

        let (trial, fallback) = match found {
            Some(t) => (t, false),
            None => {
                self.s.clear();
                self.y.clear();
                let lr = self.cfg.fallback_lr;
                let xa: Vec<f64> = x0.iter().zip(&g).map(|(a, b)| a - lr * b).collect();
                let eval = objective(&xa)?;
                evals += 1;
                *x = xa;
                *cur = eval;
                return Ok(IterationInfo {
                    evaluations: evals,
                    step: lr,
                    fallback: true,
                });
            }
        };

        let s: Vec<f64> = d.iter().map(|v| trial.alpha * v).collect();
        let yv: Vec<f64> = trial.eval.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-10 {
            if self.s.len() == self.cfg.history {
                self.s.pop_front();
                self.y.pop_front();
            }
            self.s.push_back(s);
            self.y.push_back(yv);
        }
        *x = x0.iter().zip(&d).map(|(a, b)| a + trial.alpha * b).collect();
        *cur = trial.eval;
        Ok(IterationInfo {
            evaluations: evals,
            step: trial.alpha,
            fallback,
        })
    }
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`,
/// safeguarded into the inner 80% of the bracket.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mut t = f64::NAN;
    if disc >= 0.0 {
        let d2 = disc.sqrt().copysign(b - a);
        t = b - (b - a) * ((db + d2 - d1) / (db - da + 2.0 * d2));
    }
    if !t.is_finite() || t < lo + 0.1 * width || t > hi - 0.1 * width {
        t = 0.5 * (lo + hi);
    }
    t
}

fn finite_value(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Strong Wolfe line search (bracketing then zoom). `None` when the budget
/// runs out without an acceptable point.
fn strong_wolfe<T: Clone>(
    phi: &mut dyn FnMut(f64) -> Result<Trial<T>>,
    f0: f64,
    d0: f64,
    a1: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Result<Option<Trial<T>>> {
    let armijo = |a: f64, f: f64| f <= f0 + cfg.c1 * a * d0;
    let curvature = |d: f64| d.abs() <= -cfg.c2 * d0;
    let mut best: Option<Trial<T>> = None;
    let keep_best = |t: &Trial<T>, best: &mut Option<Trial<T>>| {
        let f = finite_value(t.eval.value);
        if armijo(t.alpha, f) && best.as_ref().is_none_or(|b| f < b.eval.value) {
            *best = Some(Trial {
                alpha: t.alpha,
                eval: t.eval.clone(),
                dphi: t.dphi,
            });
        }
    };

    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, f0, d0);
    let mut a = a1;
    let mut bracket: Option<((f64, f64, f64), (f64, f64, f64))> = None;
    while *evals < cfg.max_line_search {
        let t = phi(a)?;
        *evals += 1;
        keep_best(&t, &mut best);
        let f = finite_value(t.eval.value);
        let dphi = if f.is_finite() { t.dphi } else { f64::NAN };
        if !armijo(a, f) || (*evals > 1 && f >= f_prev) || !dphi.is_finite() {
            bracket = Some(((a_prev, f_prev, d_prev), (a, f, dphi)));
            break;
        }
        if curvature(dphi) {
            return Ok(Some(t));
        }
        if dphi >= 0.0 {
            bracket = Some(((a, f, dphi), (a_prev, f_prev, d_prev)));
            break;
        }
        a_prev = a;
        f_prev = f;
        d_prev = dphi;
        a *= 2.0;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(best);
    };
    while *evals < cfg.max_line_search {
        let a = if hi.1.is_finite() && hi.2.is_finite() {
            cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            0.5 * (lo.0 + hi.0)
        };
        if (hi.0 - lo.0).abs() < 1e-16 * a.abs().max(1e-300) {
            break;
        }
        let t = phi(a)?;
        *evals += 1;
        keep_best(&t, &mut best);
        let f = finite_value(t.eval.value);
        let dphi = if f.is_finite() { t.dphi } else { f64::NAN };
        if !armijo(a, f) || f >= lo.1 || !dphi.is_finite() {
            hi = (a, f, dphi);
        } else {
            if curvature(dphi) {
                return Ok(Some(t));
            }
            if dphi * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, f, dphi);
        }
    }
    Ok(best)
}

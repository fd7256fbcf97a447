//! Dense tanh network carrying second-order input jets.
//!
//! The forward pass propagates value, input gradient and full input Hessian
//! through every layer. The reverse pass pulls cotangents on the output jet
//! back to the weights, which gives exact mixed parameter/input derivatives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Value, gradient and Hessian of `width` scalar functions of `dim` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Jets {
    pub width: usize,
    pub dim: usize,
    /// `[width]`
    pub value: Vec<f64>,
    /// `[width][dim]`
    pub grad: Vec<f64>,
    /// `[width][dim][dim]`
    pub hess: Vec<f64>,
}

impl Jets {
    pub fn zeros(width: usize, dim: usize) -> Self {
        Self {
            width,
            dim,
            value: vec![0.0; width],
            grad: vec![0.0; width * dim],
            hess: vec![0.0; width * dim * dim],
        }
    }

    /// Independent-variable jets for the point `x`.
    pub fn inputs(x: &[f64]) -> Self {
        let d = x.len();
        let mut j = Self::zeros(d, d);
        j.value.copy_from_slice(x);
        for i in 0..d {
            j.grad[i * d + i] = 1.0;
        }
        j
    }

    #[inline]
    pub fn g(&self, k: usize, p: usize) -> f64 {
        self.grad[k * self.dim + p]
    }

    #[inline]
    pub fn h(&self, k: usize, p: usize, q: usize) -> f64 {
        self.hess[(k * self.dim + p) * self.dim + q]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `[d_in, h_1, …, d_out]`
    pub widths: Vec<usize>,
    /// Per layer: row-major `W` (`out × in`) followed by `b` (`out`).
    pub params: Vec<f64>,
}

struct LayerTape {
    input: Jets,
    pre: Jets,
}

impl Mlp {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return config_err(format!("invalid layer widths {widths:?}"));
        }
        let n = Self::count_params(&widths);
        Ok(Self {
            widths,
            params: vec![0.0; n],
        })
    }

    pub fn count_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut off = 0;
        for w in self.widths.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut self.params[off..off + fan_in * fan_out] {
                *p = rng.gen_range(-bound..=bound);
            }
            off += fan_in * fan_out;
            self.params[off..off + fan_out].fill(0.0);
            off += fan_out;
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn d_in(&self) -> usize {
        self.widths[0]
    }

    pub fn d_out(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.widths.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }

    /// Plain forward evaluation.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.n_layers() - 1;
        for (l, off) in self.layer_offsets().into_iter().enumerate() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>())
                .collect();
            if l != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    fn forward_taped(&self, x: &[f64]) -> (Jets, Vec<LayerTape>) {
        let d = x.len();
        let mut a = Jets::inputs(x);
        let last = self.n_layers() - 1;
        let mut tape = Vec::with_capacity(self.n_layers());
        for (l, off) in self.layer_offsets().into_iter().enumerate() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z = Jets::zeros(n_out, d);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                z.value[o] = b[o] + row.iter().zip(&a.value).map(|(w, v)| w * v).sum::<f64>();
                for (i, &wi) in row.iter().enumerate() {
                    if wi == 0.0 {
                        continue;
                    }
                    for p in 0..d {
                        z.grad[o * d + p] += wi * a.grad[i * d + p];
                    }
                    for pq in 0..d * d {
                        z.hess[o * d * d + pq] += wi * a.hess[i * d * d + pq];
                    }
                }
            }
            let out = if l == last { z.clone() } else { tanh_jets(&z) };
            tape.push(LayerTape { input: a, pre: z });
            a = out;
        }
        (a, tape)
    }

    /// Output jets with respect to the raw network inputs.
    pub fn jets(&self, x: &[f64]) -> Jets {
        self.forward_taped(x).0
    }

    /// Forward jets plus the parameter gradient of
    /// `Σ value·v̄ + Σ grad·ḡ + Σ hess·H̄` for output cotangents built by
    /// `seed` from the forward jets.
    pub fn jets_vjp(&self, x: &[f64], seed: impl FnOnce(&Jets) -> Jets) -> (Jets, Vec<f64>) {
        let (out, tape) = self.forward_taped(x);
        let bar = seed(&out);
        let grad = self.reverse(&tape, bar);
        (out, grad)
    }

    fn reverse(&self, tape: &[LayerTape], mut bar: Jets) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        let offs = self.layer_offsets();
        let last = self.n_layers() - 1;
        for l in (0..self.n_layers()).rev() {
            let LayerTape { input: a, pre: z } = &tape[l];
            let zbar = if l == last { bar } else { tanh_jets_reverse(z, &bar) };
            let d = a.dim;
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = offs[l];
            let w = &self.params[off..off + n_in * n_out];
            for o in 0..n_out {
                grad[off + n_in * n_out + o] += zbar.value[o];
                for i in 0..n_in {
                    let mut acc = zbar.value[o] * a.value[i];
                    for p in 0..d {
                        acc += zbar.grad[o * d + p] * a.grad[i * d + p];
                    }
                    for pq in 0..d * d {
                        acc += zbar.hess[o * d * d + pq] * a.hess[i * d * d + pq];
                    }
                    grad[off + o * n_in + i] += acc;
                }
            }
            if l == 0 {
                break;
            }
            let mut abar = Jets::zeros(n_in, d);
            for o in 0..n_out {
                for i in 0..n_in {
                    let wi = w[o * n_in + i];
                    abar.value[i] += wi * zbar.value[o];
                    for p in 0..d {
                        abar.grad[i * d + p] += wi * zbar.grad[o * d + p];
                    }
                    for pq in 0..d * d {
                        abar.hess[i * d * d + pq] += wi * zbar.hess[o * d * d + pq];
                    }
                }
            }
            bar = abar;
        }
        grad
    }
}

fn tanh_jets(z: &Jets) -> Jets {
    let d = z.dim;
    let mut h = Jets::zeros(z.width, d);
    for k in 0..z.width {
        let h0 = z.value[k].tanh();
        let s1 = 1.0 - h0 * h0;
        let s2 = -2.0 * h0 * s1;
        h.value[k] = h0;
        for p in 0..d {
            h.grad[k * d + p] = s1 * z.g(k, p);
            for q in 0..d {
                h.hess[(k * d + p) * d + q] = s2 * z.g(k, p) * z.g(k, q) + s1 * z.h(k, p, q);
            }
        }
    }
    h
}

/// Pulls cotangents on `tanh(z)` back onto `z`.
fn tanh_jets_reverse(z: &Jets, hbar: &Jets) -> Jets {
    let d = z.dim;
    let mut zbar = Jets::zeros(z.width, d);
    for k in 0..z.width {
        let h0 = z.value[k].tanh();
        let s1 = 1.0 - h0 * h0;
        let s2 = -2.0 * h0 * s1;
        let mut s1bar = 0.0;
        let mut s2bar = 0.0;
        for p in 0..d {
            let gbar = hbar.g(k, p);
            s1bar += gbar * z.g(k, p);
            let mut sym = 0.0;
            for q in 0..d {
                let hb = hbar.h(k, p, q);
                zbar.hess[(k * d + p) * d + q] = s1 * hb;
                s1bar += hb * z.h(k, p, q);
                s2bar += hb * z.g(k, p) * z.g(k, q);
                sym += (hb + hbar.h(k, q, p)) * z.g(k, q);
            }
            zbar.grad[k * d + p] = s1 * gbar + s2 * sym;
        }
        let h0bar = hbar.value[k] + s1bar * (-2.0 * h0) + s2bar * (-2.0 * s1 + 4.0 * h0 * h0);
        zbar.value[k] = s1 * h0bar;
    }
    zbar
}

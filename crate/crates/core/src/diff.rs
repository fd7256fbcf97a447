//! Exact derivatives of the hybrid model.
//!
//! Every trainable or data-dependent angle enters the circuits through a
//! Pauli rotation, so expectation values are trigonometric polynomials of
//! degree one in each angle. Shift rules are therefore exact at every order
//! and compose: an order-`m` mixed derivative is a signed sum of `2^m`
//! evaluations at `±π/2` shifts. Input derivatives of the model output chain
//! these circuit derivatives with embedding jets; loss gradients pull
//! cotangents on those input derivatives back onto every parameter.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::circuits::ModelSpec;
use crate::error::Result;
use crate::mlp::Jets;
use crate::physics::{LossBreakdown, Problem};

/// Largest mixed-derivative order the shift cache handles.
pub const MAX_SHIFT_ORDER: usize = 4;

type ShiftKey = [(u32, u8); MAX_SHIFT_ORDER];
const EMPTY_SLOT: (u32, u8) = (u32::MAX, 0);

fn shift_angle(k: u8) -> f64 {
    match k {
        1 => FRAC_PI_2,
        2 => PI,
        3 => -FRAC_PI_2,
        _ => 0.0,
    }
}

/// Iterates the `2^m` shift patterns of an order-`m` derivative over
/// `slots`, yielding the canonical key (shifts mod 2π, in quarter turns)
/// and the sign of each term.
fn shift_terms(slots: &[usize]) -> impl Iterator<Item = (ShiftKey, f64)> + '_ {
    let m = slots.len();
    assert!(m <= MAX_SHIFT_ORDER, "shift order {m} exceeds {MAX_SHIFT_ORDER}");
    (0..1u32 << m).map(move |mask| {
        let mut key = [EMPTY_SLOT; MAX_SHIFT_ORDER];
        let mut len = 0;
        let mut sign = 1.0;
        for (i, &s) in slots.iter().enumerate() {
            let plus = mask >> i & 1 == 1;
            if !plus {
                sign = -sign;
            }
            let step = if plus { 1 } else { 3 };
            match key[..len].iter_mut().find(|e| e.0 == s as u32) {
                Some(e) => e.1 = (e.1 + step) % 4,
                None => {
                    key[len] = (s as u32, step);
                    len += 1;
                }
            }
        }
        let mut packed = [EMPTY_SLOT; MAX_SHIFT_ORDER];
        let mut n = 0;
        for e in &key[..len] {
            if e.1 != 0 {
                packed[n] = *e;
                n += 1;
            }
        }
        packed[..n].sort_unstable();
        (packed, sign)
    })
}

/// Memoized shift-rule evaluator for a vector-valued circuit function.
///
/// Evaluations are keyed by the shift pattern relative to `base`, so nested
/// derivatives at one point share circuit executions.
pub(crate) struct ShiftCache<F> {
    base: Vec<f64>,
    n_out: usize,
    f: F,
    memo: HashMap<ShiftKey, Vec<f64>>,
    evals: u64,
}

impl<F: Fn(&[f64]) -> Vec<f64>> ShiftCache<F> {
    pub(crate) fn new(base: Vec<f64>, n_out: usize, f: F) -> Self {
        Self {
            base,
            n_out,
            f,
            memo: HashMap::new(),
            evals: 0,
        }
    }

    fn lookup(&mut self, key: ShiftKey) -> &[f64] {
        if !self.memo.contains_key(&key) {
            let mut angles = self.base.clone();
            for &(s, k) in key.iter().take_while(|e| e.1 != 0) {
                angles[s as usize] += shift_angle(k);
            }
            let out = (self.f)(&angles);
            self.evals += 1;
            self.memo.insert(key, out);
        }
        &self.memo[&key]
    }

    /// `∂^m f / ∂θ_{s1} … ∂θ_{sm}` (slots may repeat).
    pub(crate) fn derivative(&mut self, slots: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_out];
        let scale = 0.5f64.powi(slots.len() as i32);
        for (key, sign) in shift_terms(slots) {
            let v = self.lookup(key);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += sign * x;
            }
        }
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    }

    pub(crate) fn evals(&self) -> u64 {
        self.evals
    }
}

/// A scalar circuit expectation `f(angles)` together with the angle slots
/// that may be shifted.
pub struct ShiftEvaluator<F> {
    f: F,
    slots: Vec<usize>,
}

impl<F: Fn(&[f64]) -> f64> ShiftEvaluator<F> {
    /// Every slot must index an angle entering through a single
    /// `exp(-i θ σ/2)` rotation.
    pub fn new(f: F, slots: Vec<usize>) -> Self {
        Self { f, slots }
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    fn check(&self, slot: usize) {
        assert!(self.slots.contains(&slot), "slot {slot} is not shiftable");
    }

    fn nth(&self, slots: &[usize], angles: &[f64]) -> f64 {
        let scale = 0.5f64.powi(slots.len() as i32);
        let mut acc = 0.0;
        let mut shifted = angles.to_vec();
        for (key, sign) in shift_terms(slots) {
            shifted.copy_from_slice(angles);
            for &(s, k) in key.iter().take_while(|e| e.1 != 0) {
                shifted[s as usize] += shift_angle(k);
            }
            acc += sign * (self.f)(&shifted);
        }
        scale * acc
    }

    /// `(f(θ + π/2 e_s) − f(θ − π/2 e_s)) / 2`.
    pub fn first(&self, slot: usize, angles: &[f64]) -> f64 {
        self.check(slot);
        self.nth(&[slot], angles)
    }

    /// Four-point rule for `∂²f/∂θ_i∂θ_j`; `i = j` gives
    /// `(f(θ+π e_i) − 2f(θ) + f(θ−π e_i)) / 4` through the same four terms.
    pub fn second(&self, i: usize, j: usize, angles: &[f64]) -> f64 {
        self.check(i);
        self.check(j);
        let scale = 0.25;
        let e = |si: f64, sj: f64| {
            let mut a = angles.to_vec();
            a[i] += si * FRAC_PI_2;
            a[j] += sj * FRAC_PI_2;
            (self.f)(&a)
        };
        scale * ((e(1.0, 1.0) + e(-1.0, -1.0)) - (e(1.0, -1.0) + e(-1.0, 1.0)))
    }
}

pub fn shift_first<F: Fn(&[f64]) -> f64>(f: &ShiftEvaluator<F>, slot: usize, angles: &[f64]) -> f64 {
    f.first(slot, angles)
}

pub fn shift_second<F: Fn(&[f64]) -> f64>(
    f: &ShiftEvaluator<F>,
    i: usize,
    j: usize,
    angles: &[f64],
) -> f64 {
    f.second(i, j, angles)
}

/// How many input derivatives a field evaluation carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    /// First derivatives in every coordinate.
    First,
    /// First derivatives in every coordinate plus unmixed second
    /// derivatives in the spatial coordinates (the time slot stays zero).
    Second,
}

/// Both species' values and input derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: [f64; 2],
    /// `[coord] -> [c_A, c_S]`
    pub first: Vec<[f64; 2]>,
    /// `[coord] -> [c_A, c_S]`, unmixed second derivatives
    pub second: Vec<[f64; 2]>,
}

impl FieldJet {
    pub fn zeros(dim: usize) -> Self {
        Self {
            value: [0.0; 2],
            first: vec![[0.0; 2]; dim],
            second: vec![[0.0; 2]; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// `∂c/∂t` (time is the last coordinate).
    pub fn dt(&self) -> [f64; 2] {
        self.first[self.dim() - 1]
    }

    /// Sum of the spatial unmixed second derivatives.
    pub fn laplacian(&self) -> [f64; 2] {
        let d = self.dim();
        self.second[..d - 1]
            .iter()
            .fold([0.0; 2], |acc, s| [acc[0] + s[0], acc[1] + s[1]])
    }
}

/// Cotangents on a [`FieldJet`]; same layout.
pub type FieldCotangent = FieldJet;

/// A trainable map from space–time points to `(c_A, c_S)`.
pub trait FieldModel: Sync {
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    /// Whether evaluations execute quantum circuits.
    fn uses_circuits(&self) -> bool;

    /// Field jet and the number of circuit executions spent.
    fn jet(&self, coords: &[f64], order: Order) -> Result<(FieldJet, u64)>;

    /// Field jet plus the parameter gradient of `⟨seed(jet), jet⟩`.
    fn jet_vjp(
        &self,
        coords: &[f64],
        order: Order,
        seed: &dyn Fn(&FieldJet) -> FieldCotangent,
    ) -> Result<(FieldJet, Vec<f64>, u64)>;
}

/// Circuit derivative tables needed by a quantum field jet.
struct CircuitJet<'a, F> {
    cache: ShiftCache<F>,
    alpha: &'a Jets,
    n_q: usize,
    gain: [f64; 2],
}

impl<F: Fn(&[f64]) -> Vec<f64>> CircuitJet<'_, F> {
    fn d(&mut self, slots: &[usize]) -> [f64; 2] {
        let v = self.cache.derivative(slots);
        [v[0], v[1]]
    }

    fn forward(&mut self, order: Order) -> FieldJet {
        let dim = self.alpha.dim;
        let n = self.n_q;
        let g = self.gain;
        let mut jet = FieldJet::zeros(dim);
        let e0 = self.d(&[]);
        jet.value = [g[0] * e0[0], g[1] * e0[1]];
        if order == Order::Value {
            return jet;
        }
        let e1: Vec<[f64; 2]> = (0..n).map(|j| self.d(&[j])).collect();
        for c in 0..dim {
            for (j, e) in e1.iter().enumerate() {
                let a = self.alpha.g(j, c);
                jet.first[c][0] += g[0] * e[0] * a;
                jet.first[c][1] += g[1] * e[1] * a;
            }
        }
        if order == Order::First {
            return jet;
        }
        let mut e2 = vec![[0.0; 2]; n * n];
        for j in 0..n {
            for k in j..n {
                let v = self.d(&[j, k]);
                e2[j * n + k] = v;
                e2[k * n + j] = v;
            }
        }
        for c in 0..dim - 1 {
            let mut acc = [0.0; 2];
            for j in 0..n {
                let aj = self.alpha.g(j, c);
                let ajj = self.alpha.h(j, c, c);
                for i in 0..2 {
                    acc[i] += e1[j][i] * ajj;
                }
                for k in 0..n {
                    let w = aj * self.alpha.g(k, c);
                    for i in 0..2 {
                        acc[i] += e2[j * n + k][i] * w;
                    }
                }
            }
            jet.second[c] = [g[0] * acc[0], g[1] * acc[1]];
        }
        jet
    }
}

impl ModelSpec {
    fn circuit_fn(&self) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        let n = self.n_qubits();
        move |a: &[f64]| {
            let (enc, theta) = a.split_at(n);
            self.raw_readout(enc, theta).to_vec()
        }
    }

    fn circuit_base(&self, alpha: &[f64]) -> Vec<f64> {
        let mut base = alpha.to_vec();
        base.extend_from_slice(&self.theta.0);
        base
    }
}

impl FieldModel for ModelSpec {
    fn dim(&self) -> usize {
        self.embedding.dim()
    }

    fn n_params(&self) -> usize {
        self.embedding.n_params() + self.theta.0.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.embedding.params().to_vec();
        p.extend_from_slice(&self.theta.0);
        p
    }

    fn set_params(&mut self, params: &[f64]) {
        let ne = self.embedding.n_params();
        self.embedding.params_mut().copy_from_slice(&params[..ne]);
        self.theta.0.copy_from_slice(&params[ne..]);
    }

    fn uses_circuits(&self) -> bool {
        true
    }

    fn jet(&self, coords: &[f64], order: Order) -> Result<(FieldJet, u64)> {
        let (alpha, _, emb_evals) = self.embedding.jets_ordered(coords, order, false)?;
        let mut cj = CircuitJet {
            cache: ShiftCache::new(self.circuit_base(&alpha.value), 2, self.circuit_fn()),
            alpha: &alpha,
            n_q: self.n_qubits(),
            gain: self.readout_gain(),
        };
        let mut jet = cj.forward(order);
        let o = self.output.offset;
        jet.value = [jet.value[0] + o[0], jet.value[1] + o[1]];
        Ok((jet, emb_evals + cj.cache.evals()))
    }

    fn jet_vjp(
        &self,
        coords: &[f64],
        order: Order,
        seed: &dyn Fn(&FieldJet) -> FieldCotangent,
    ) -> Result<(FieldJet, Vec<f64>, u64)> {
        let n = self.n_qubits();
        let n_var = self.theta.0.len();
        let gain = self.readout_gain();
        let offset = self.output.offset;
        let mut out: Option<(FieldJet, Vec<f64>, u64)> = None;

        let (_, emb_grad, emb_evals) = self.embedding.jets_vjp(coords, order, |alpha| {
            let dim = alpha.dim;
            let mut cj = CircuitJet {
                cache: ShiftCache::new(self.circuit_base(&alpha.value), 2, self.circuit_fn()),
                alpha,
                n_q: n,
                gain,
            };
            let mut jet = cj.forward(order);
            jet.value = [jet.value[0] + offset[0], jet.value[1] + offset[1]];
            let bar = seed(&jet);

            // weights on E_slot, E_{j,slot}, E_{j,k,slot}, gains folded in
            let w0 = [gain[0] * bar.value[0], gain[1] * bar.value[1]];
            let mut w1 = vec![[0.0; 2]; n];
            let mut w2 = vec![[0.0; 2]; n * n];
            for c in 0..dim {
                for i in 0..2 {
                    let b1 = if order >= Order::First { gain[i] * bar.first[c][i] } else { 0.0 };
                    let b2 = if order == Order::Second && c + 1 < dim {
                        gain[i] * bar.second[c][i]
                    } else {
                        0.0
                    };
                    if b1 == 0.0 && b2 == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        w1[j][i] += b1 * alpha.g(j, c) + b2 * alpha.h(j, c, c);
                        if b2 != 0.0 {
                            for k in 0..n {
                                w2[j * n + k][i] += b2 * alpha.g(j, c) * alpha.g(k, c);
                            }
                        }
                    }
                }
            }
            let any1 = w1.iter().any(|w| w[0] != 0.0 || w[1] != 0.0);
            let any2 = w2.iter().any(|w| w[0] != 0.0 || w[1] != 0.0);

            let slot_grad = |cj: &mut CircuitJet<'_, _>, slot: usize| -> f64 {
                let dot = |w: [f64; 2], e: [f64; 2]| w[0] * e[0] + w[1] * e[1];
                let mut g = dot(w0, cj.d(&[slot]));
                if any1 {
                    for j in 0..n {
                        if w1[j] != [0.0; 2] {
                            g += dot(w1[j], cj.d(&[j, slot]));
                        }
                    }
                }
                if any2 {
                    for j in 0..n {
                        for k in j..n {
                            let w = w2[j * n + k];
                            if w == [0.0; 2] {
                                continue;
                            }
                            let mult = if j == k { 1.0 } else { 2.0 };
                            g += mult * dot(w, cj.d(&[j, k, slot]));
                        }
                    }
                }
                g
            };

            let mut var_grad = vec![0.0; n_var];
            for (l, gl) in var_grad.iter_mut().enumerate() {
                *gl = slot_grad(&mut cj, n + l);
            }

            // cotangents on the angle jets
            let mut abar = Jets::zeros(n, dim);
            for m in 0..n {
                abar.value[m] = slot_grad(&mut cj, m);
            }
            if order >= Order::First {
                for j in 0..n {
                    let ej = cj.d(&[j]);
                    for c in 0..dim {
                        let b1 = [gain[0] * bar.first[c][0], gain[1] * bar.first[c][1]];
                        let mut v = b1[0] * ej[0] + b1[1] * ej[1];
                        if order == Order::Second && c + 1 < dim {
                            let b2 = [gain[0] * bar.second[c][0], gain[1] * bar.second[c][1]];
                            if b2 != [0.0; 2] {
                                for k in 0..n {
                                    let ejk = cj.d(&[j, k]);
                                    v += 2.0 * (b2[0] * ejk[0] + b2[1] * ejk[1]) * alpha.g(k, c);
                                }
                                abar.hess[(j * dim + c) * dim + c] = b2[0] * ej[0] + b2[1] * ej[1];
                            }
                        }
                        abar.grad[j * dim + c] = v;
                    }
                }
            }
            let evals = cj.cache.evals();
            out = Some((jet, var_grad, evals));
            abar
        })?;

        let (jet, var_grad, circ_evals) = out.expect("seed closure ran");
        let mut grad = emb_grad;
        grad.extend_from_slice(&var_grad);
        Ok((jet, grad, emb_evals + circ_evals))
    }
}

/// `∂c̃_i/∂coord` for both species: `[species][coord]`.
pub fn input_gradient(model: &dyn FieldModel, coords: &[f64]) -> Result<[Vec<f64>; 2]> {
    let (jet, _) = model.jet(coords, Order::First)?;
    Ok([
        jet.first.iter().map(|v| v[0]).collect(),
        jet.first.iter().map(|v| v[1]).collect(),
    ])
}

/// Spatial Laplacian and time derivative of both species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianAndRate {
    pub laplacian: [f64; 2],
    pub dt: [f64; 2],
}

pub fn input_laplacian(model: &dyn FieldModel, coords: &[f64]) -> Result<LaplacianAndRate> {
    let (jet, _) = model.jet(coords, Order::Second)?;
    Ok(LaplacianAndRate {
        laplacian: jet.laplacian(),
        dt: jet.dt(),
    })
}

/// Total loss and its gradient over every trainable parameter.
pub fn loss_grad(model: &dyn FieldModel, problem: &Problem) -> Result<(LossBreakdown, Vec<f64>)> {
    let eval = crate::physics::evaluate(model, problem, true)?;
    Ok((eval.breakdown, eval.grad.expect("gradient requested")))
}

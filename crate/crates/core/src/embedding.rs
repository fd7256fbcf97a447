//! Trainable maps from space–time coordinates to encoding angles.
//!
//! Coordinates are ordered `[x, t]` in 1D and `[x, y, t]` in 2D. Each
//! embedding works on normalized coordinates in `[-1, 1]`; jets returned
//! here are already expressed in original units.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::AnsatzSpec;
use crate::diff::{Order, ShiftCache};
use crate::error::{config_err, Result};
use crate::mlp::{Jets, Mlp};
use crate::statevector::StateVector;

/// Affine map of `value` from `[min, max]` onto `[-1, 1]` (no clamping).
pub fn normalize(value: f64, bounds: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return config_err(format!("degenerate normalization bounds ({lo}, {hi})"));
    }
    Ok(2.0 * (value - lo) / (hi - lo) - 1.0)
}

/// Per-coordinate `(min, max)` bounds in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub bounds: Vec<(f64, f64)>,
}

impl NormalizationSpec {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let s = Self { bounds };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() < 2 {
            return config_err("normalization needs at least one space and one time coordinate");
        }
        for &(lo, hi) in &self.bounds {
            if !(lo < hi) {
                return config_err(format!("degenerate normalization bounds ({lo}, {hi})"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn apply(&self, coords: &[f64]) -> Vec<f64> {
        coords
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    /// `d(normalized)/d(original)` per coordinate.
    pub fn slopes(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 2.0 / (hi - lo)).collect()
    }
}

/// Optional product of an output angle with a normalized coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    None,
    MultiplyX,
    MultiplyT,
}

impl Gating {
    fn coord(self, dim: usize) -> Option<usize> {
        match self {
            Gating::None => None,
            Gating::MultiplyX => Some(0),
            Gating::MultiplyT => Some(dim - 1),
        }
    }

    /// Even output angles gated by `x̃`, odd ones by `t̃`.
    pub fn alternating(n: usize) -> Vec<Gating> {
        (0..n)
            .map(|j| if j % 2 == 0 { Gating::MultiplyX } else { Gating::MultiplyT })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnEmbedding {
    pub net: Mlp,
}

impl FnnEmbedding {
    /// `d_in → hidden… → n_out` with tanh hidden layers, Glorot init.
    pub fn new<R: Rng + ?Sized>(d_in: usize, hidden: &[usize], n_out: usize, rng: &mut R) -> Result<Self> {
        let mut widths = vec![d_in];
        widths.extend_from_slice(hidden);
        widths.push(n_out);
        let mut net = Mlp::new(widths)?;
        net.init_glorot(rng);
        Ok(Self { net })
    }
}

/// Quantum embedding circuit.
///
/// Qubit `q` first receives `RY(π·ũ_{q mod d})` (so `x̃, t̃` alternate in 1D
/// and `x̃, ỹ, t̃` cycle in 2D), then `n_layers` ansatz layers with angles
/// `theta`. Output angle `j` is `(π/2)·⟨Z_j⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnnEmbedding {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub theta: Vec<f64>,
}

impl QnnEmbedding {
    pub fn new<R: Rng + ?Sized>(n_qubits: usize, n_layers: usize, init_range: f64, rng: &mut R) -> Result<Self> {
        let spec = AnsatzSpec::new(n_qubits, n_layers)?;
        let theta = (0..spec.n_params())
            .map(|_| rng.gen_range(-init_range..=init_range))
            .collect();
        Ok(Self {
            n_qubits,
            n_layers,
            theta,
        })
    }

    fn ansatz(&self) -> AnsatzSpec {
        AnsatzSpec {
            n_qubits: self.n_qubits,
            n_layers: self.n_layers,
        }
    }

    /// Layer count whose parameter total `3·n_qubits·L` is closest to
    /// `target`; ties go to the smaller count.
    pub fn layers_matching(n_qubits: usize, target: usize) -> usize {
        let per = 3 * n_qubits;
        let lo = (target / per).max(1);
        let hi = lo + 1;
        if target.abs_diff(hi * per) < target.abs_diff(lo * per) {
            hi
        } else {
            lo
        }
    }

    fn encoding_slots(&self, dim: usize) -> Vec<Vec<usize>> {
        let mut slots = vec![Vec::new(); dim];
        for q in 0..self.n_qubits {
            slots[q % dim].push(q);
        }
        slots
    }

    fn circuit(&self, angles: &[f64]) -> Vec<f64> {
        let (enc, theta) = angles.split_at(self.n_qubits);
        let mut state = StateVector::ry_product(enc);
        self.ansatz().apply_raw(&mut state, theta);
        state.z_expectations()
    }

    fn base_angles(&self, u: &[f64]) -> Vec<f64> {
        let mut angles: Vec<f64> = (0..self.n_qubits).map(|q| PI * u[q % u.len()]).collect();
        angles.extend_from_slice(&self.theta);
        angles
    }

    fn eval(&self, u: &[f64]) -> Vec<f64> {
        self.circuit(&self.base_angles(u))
            .into_iter()
            .map(|z| FRAC_PI_2 * z)
            .collect()
    }

    /// Jets (and optionally parameter tensors) in normalized coordinates.
    /// Parameter second derivatives skip the time coordinate unless
    /// `time_second` is set.
    fn jets(&self, u: &[f64], order: Order, with_params: bool, time_second: bool) -> (Jets, Option<ParamJets>, u64) {
        let d = u.len();
        let n = self.n_qubits;
        let slots = self.encoding_slots(d);
        let mut cache = ShiftCache::new(self.base_angles(u), n, |a: &[f64]| self.circuit(a));
        let mut jets = Jets::zeros(n, d);
        jets.value = cache.derivative(&[]).iter().map(|z| FRAC_PI_2 * z).collect();
        for c in 0..d {
            if order == Order::Value {
                break;
            }
            for &q in &slots[c] {
                let dz = cache.derivative(&[q]);
                for j in 0..n {
                    jets.grad[j * d + c] += FRAC_PI_2 * PI * dz[j];
                }
            }
            if order != Order::Second {
                continue;
            }
            for e in 0..d {
                for &q in &slots[c] {
                    for &r in &slots[e] {
                        let dz = cache.derivative(&[q, r]);
                        for j in 0..n {
                            jets.hess[(j * d + c) * d + e] += FRAC_PI_2 * PI * PI * dz[j];
                        }
                    }
                }
            }
        }
        let params = with_params.then(|| {
            let np = self.theta.len();
            let mut pj = ParamJets::zeros(n, d, np);
            for p in 0..np {
                let slot = n + p;
                let dz = cache.derivative(&[slot]);
                for j in 0..n {
                    pj.value[j * np + p] = FRAC_PI_2 * dz[j];
                }
                if order == Order::Value {
                    continue;
                }
                for c in 0..d {
                    let second = order == Order::Second && (time_second || c + 1 < d);
                    for &q in &slots[c] {
                        let dz = cache.derivative(&[q, slot]);
                        for j in 0..n {
                            let k = pj.at(j, c, p);
                            pj.first[k] += FRAC_PI_2 * PI * dz[j];
                        }
                        if !second {
                            continue;
                        }
                        for &r in &slots[c] {
                            let dz = cache.derivative(&[q, r, slot]);
                            for j in 0..n {
                                let k = pj.at(j, c, p);
                                pj.second[k] += FRAC_PI_2 * PI * PI * dz[j];
                            }
                        }
                    }
                }
            }
            pj
        });
        (jets, params, cache.evals())
    }
}

/// Derivatives of each output angle with respect to each trainable
/// parameter: of the value, of each first input derivative and of each
/// diagonal second input derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamJets {
    pub n_out: usize,
    pub dim: usize,
    pub n_params: usize,
    /// `[n_out][n_params]`
    pub value: Vec<f64>,
    /// `[n_out][dim][n_params]`
    pub first: Vec<f64>,
    /// `[n_out][dim][n_params]`, diagonal second derivatives only
    pub second: Vec<f64>,
}

impl ParamJets {
    pub fn zeros(n_out: usize, dim: usize, n_params: usize) -> Self {
        Self {
            n_out,
            dim,
            n_params,
            value: vec![0.0; n_out * n_params],
            first: vec![0.0; n_out * dim * n_params],
            second: vec![0.0; n_out * dim * n_params],
        }
    }

    #[inline]
    pub fn at(&self, j: usize, c: usize, p: usize) -> usize {
        (j * self.dim + c) * self.n_params + p
    }

    /// Row `j` of the value Jacobian.
    pub fn value_row(&self, j: usize) -> &[f64] {
        &self.value[j * self.n_params..(j + 1) * self.n_params]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EmbeddingKind {
    Fnn(FnnEmbedding),
    Qnn(QnnEmbedding),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    pub normalization: NormalizationSpec,
    pub gating: Vec<Gating>,
}

impl EmbeddingSpec {
    pub fn fnn(net: FnnEmbedding, normalization: NormalizationSpec, gating: Vec<Gating>) -> Self {
        Self {
            kind: EmbeddingKind::Fnn(net),
            normalization,
            gating,
        }
    }

    pub fn qnn(q: QnnEmbedding, normalization: NormalizationSpec, gating: Vec<Gating>) -> Self {
        Self {
            kind: EmbeddingKind::Qnn(q),
            normalization,
            gating,
        }
    }

    /// An FNN embedding with a single zero-weight layer whose biases are
    /// `angles`: constant output, no gating.
    pub fn constant_angles(angles: Vec<f64>, normalization: NormalizationSpec) -> Self {
        let d = normalization.dim();
        let n = angles.len();
        let mut net = Mlp::new(vec![d, n]).expect("nonzero widths");
        net.params[d * n..].copy_from_slice(&angles);
        Self {
            kind: EmbeddingKind::Fnn(FnnEmbedding { net }),
            normalization,
            gating: vec![Gating::None; n],
        }
    }

    pub fn n_outputs(&self) -> usize {
        match &self.kind {
            EmbeddingKind::Fnn(f) => f.net.d_out(),
            EmbeddingKind::Qnn(q) => q.n_qubits,
        }
    }

    pub fn dim(&self) -> usize {
        self.normalization.dim()
    }

    pub fn n_params(&self) -> usize {
        match &self.kind {
            EmbeddingKind::Fnn(f) => f.net.n_params(),
            EmbeddingKind::Qnn(q) => q.theta.len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match &self.kind {
            EmbeddingKind::Fnn(f) => &f.net.params,
            EmbeddingKind::Qnn(q) => &q.theta,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.kind {
            EmbeddingKind::Fnn(f) => &mut f.net.params,
            EmbeddingKind::Qnn(q) => &mut q.theta,
        }
    }

    pub fn is_quantum(&self) -> bool {
        matches!(self.kind, EmbeddingKind::Qnn(_))
    }

    pub fn validate(&self) -> Result<()> {
        self.normalization.validate()?;
        if self.gating.len() != self.n_outputs() {
            return config_err(format!(
                "{} gating entries for {} embedding outputs",
                self.gating.len(),
                self.n_outputs()
            ));
        }
        match &self.kind {
            EmbeddingKind::Fnn(f) => {
                if f.net.d_in() != self.dim() {
                    return config_err(format!(
                        "FNN input width {} does not match {} coordinates",
                        f.net.d_in(),
                        self.dim()
                    ));
                }
            }
            EmbeddingKind::Qnn(q) => {
                let spec = AnsatzSpec::new(q.n_qubits, q.n_layers)?;
                if q.theta.len() != spec.n_params() {
                    return config_err(format!(
                        "QNN embedding has {} parameters, expected {}",
                        q.theta.len(),
                        spec.n_params()
                    ));
                }
            }
        }
        if self.params().iter().any(|p| !p.is_finite()) {
            return config_err("non-finite embedding parameter");
        }
        Ok(())
    }

    fn check_coords(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.dim() {
            return config_err(format!(
                "{} coordinates given, embedding expects {}",
                coords.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// Encoding angles at an original-unit point.
    pub fn angles(&self, coords: &[f64]) -> Result<Vec<f64>> {
        self.check_coords(coords)?;
        let u = self.normalization.apply(coords);
        let base = match &self.kind {
            EmbeddingKind::Fnn(f) => f.net.eval(&u),
            EmbeddingKind::Qnn(q) => q.eval(&u),
        };
        Ok(base
            .into_iter()
            .zip(&self.gating)
            .map(|(b, g)| match g.coord(u.len()) {
                Some(c) => u[c] * b,
                None => b,
            })
            .collect())
    }

    /// Angle jets in original units, optional parameter tensors, and the
    /// number of embedding-circuit executions spent.
    pub(crate) fn jets_full(&self, coords: &[f64], with_params: bool) -> Result<(Jets, Option<ParamJets>, u64)> {
        self.jets_impl(coords, Order::Second, with_params, true)
    }

    /// As [`Self::jets_full`] but limited to what `order` needs.
    pub(crate) fn jets_ordered(&self, coords: &[f64], order: Order, with_params: bool) -> Result<(Jets, Option<ParamJets>, u64)> {
        self.jets_impl(coords, order, with_params, false)
    }

    fn jets_impl(
        &self,
        coords: &[f64],
        order: Order,
        with_params: bool,
        time_second: bool,
    ) -> Result<(Jets, Option<ParamJets>, u64)> {
        self.check_coords(coords)?;
        let u = self.normalization.apply(coords);
        let (base, params, evals) = match &self.kind {
            EmbeddingKind::Fnn(f) => {
                let jets = f.net.jets(&u);
                let params = with_params.then(|| fnn_param_jets(&f.net, &u));
                (jets, params, 0)
            }
            EmbeddingKind::Qnn(q) => q.jets(&u, order, with_params, time_second),
        };
        let (mut jets, mut params) = self.gate(&u, base, params);
        self.to_original_units(&mut jets, params.as_mut());
        Ok((jets, params, evals))
    }

    fn gate(&self, u: &[f64], b: Jets, bp: Option<ParamJets>) -> (Jets, Option<ParamJets>) {
        let d = u.len();
        let mut a = b.clone();
        let mut ap = bp.clone();
        for (j, g) in self.gating.iter().enumerate() {
            let Some(gc) = g.coord(d) else { continue };
            let ug = u[gc];
            a.value[j] = ug * b.value[j];
            for c in 0..d {
                a.grad[j * d + c] = ug * b.g(j, c) + if c == gc { b.value[j] } else { 0.0 };
                for e in 0..d {
                    let mut h = ug * b.h(j, c, e);
                    if c == gc {
                        h += b.g(j, e);
                    }
                    if e == gc {
                        h += b.g(j, c);
                    }
                    a.hess[(j * d + c) * d + e] = h;
                }
            }
            if let (Some(ap), Some(bp)) = (ap.as_mut(), bp.as_ref()) {
                let np = bp.n_params;
                for p in 0..np {
                    let bv = bp.value[j * np + p];
                    ap.value[j * np + p] = ug * bv;
                    for c in 0..d {
                        let k = bp.at(j, c, p);
                        let (b1, b2) = (bp.first[k], bp.second[k]);
                        if c == gc {
                            ap.first[k] = ug * b1 + bv;
                            ap.second[k] = ug * b2 + 2.0 * b1;
                        } else {
                            ap.first[k] = ug * b1;
                            ap.second[k] = ug * b2;
                        }
                    }
                }
            }
        }
        (a, ap)
    }

    fn to_original_units(&self, jets: &mut Jets, params: Option<&mut ParamJets>) {
        let s = self.normalization.slopes();
        let d = s.len();
        for j in 0..jets.width {
            for c in 0..d {
                jets.grad[j * d + c] *= s[c];
                for e in 0..d {
                    jets.hess[(j * d + c) * d + e] *= s[c] * s[e];
                }
            }
        }
        if let Some(p) = params {
            for j in 0..p.n_out {
                for c in 0..d {
                    for q in 0..p.n_params {
                        let k = p.at(j, c, q);
                        p.first[k] *= s[c];
                        p.second[k] *= s[c] * s[c];
                    }
                }
            }
        }
    }

    /// Angle jets plus the parameter gradient of the functional defined by
    /// `seed` (cotangents on value, first and diagonal second derivatives).
    /// Only cotangents covered by `order` reach the parameters.
    pub(crate) fn jets_vjp(
        &self,
        coords: &[f64],
        order: Order,
        seed: impl FnOnce(&Jets) -> Jets,
    ) -> Result<(Jets, Vec<f64>, u64)> {
        match &self.kind {
            EmbeddingKind::Fnn(f) => {
                self.check_coords(coords)?;
                let u = self.normalization.apply(coords);
                let s = self.normalization.slopes();
                let mut out = None;
                let (_, grad) = f.net.jets_vjp(&u, |base| {
                    let (mut jets, _) = self.gate(&u, base.clone(), None);
                    self.to_original_units(&mut jets, None);
                    let bar = seed(&jets);
                    out = Some(jets);
                    self.gate_reverse(&u, &s, bar)
                });
                Ok((out.expect("seed closure ran"), grad, 0))
            }
            EmbeddingKind::Qnn(_) => {
                let (jets, params, evals) = self.jets_ordered(coords, order, true)?;
                let params = params.expect("requested");
                let bar = seed(&jets);
                Ok((jets, contract(&params, &bar), evals))
            }
        }
    }

    /// Maps output-jet cotangents (original units) back onto the base network
    /// jets in normalized coordinates.
    fn gate_reverse(&self, u: &[f64], slopes: &[f64], bar: Jets) -> Jets {
        let d = u.len();
        // undo unit scaling: ∂L/∂(normalized deriv) = ∂L/∂(original deriv) · slope
        let mut nb = bar;
        for j in 0..nb.width {
            for c in 0..d {
                nb.grad[j * d + c] *= slopes[c];
                for e in 0..d {
                    nb.hess[(j * d + c) * d + e] *= slopes[c] * slopes[e];
                }
            }
        }
        let mut out = nb.clone();
        for (j, g) in self.gating.iter().enumerate() {
            let Some(gc) = g.coord(d) else { continue };
            let ug = u[gc];
            out.value[j] = ug * nb.value[j] + nb.g(j, gc);
            for c in 0..d {
                let mut gb = ug * nb.g(j, c);
                gb += nb.h(j, gc, c) + nb.h(j, c, gc);
                out.grad[j * d + c] = gb;
                for e in 0..d {
                    out.hess[(j * d + c) * d + e] = ug * nb.h(j, c, e);
                }
            }
        }
        out
    }
}

/// Contracts parameter tensors with output-jet cotangents (diagonal second
/// derivatives only).
fn contract(p: &ParamJets, bar: &Jets) -> Vec<f64> {
    let d = p.dim;
    let np = p.n_params;
    let mut g = vec![0.0; np];
    for j in 0..p.n_out {
        let w = bar.value[j];
        if w != 0.0 {
            for (gi, v) in g.iter_mut().zip(p.value_row(j)) {
                *gi += w * v;
            }
        }
        for c in 0..d {
            let w1 = bar.g(j, c);
            let w2 = bar.h(j, c, c);
            if w1 == 0.0 && w2 == 0.0 {
                continue;
            }
            let base = p.at(j, c, 0);
            for q in 0..np {
                g[q] += w1 * p.first[base + q] + w2 * p.second[base + q];
            }
        }
    }
    g
}

/// Full parameter tensors for an MLP via one reverse pass per seed.
fn fnn_param_jets(net: &Mlp, u: &[f64]) -> ParamJets {
    let d = u.len();
    let n = net.d_out();
    let np = net.n_params();
    let mut pj = ParamJets::zeros(n, d, np);
    let run = |set: &dyn Fn(&mut Jets)| {
        net.jets_vjp(u, |j| {
            let mut b = Jets::zeros(j.width, j.dim);
            set(&mut b);
            b
        })
        .1
    };
    for j in 0..n {
        let g = run(&|b| b.value[j] = 1.0);
        pj.value[j * np..(j + 1) * np].copy_from_slice(&g);
        for c in 0..d {
            let g = run(&|b| b.grad[j * d + c] = 1.0);
            let k = pj.at(j, c, 0);
            pj.first[k..k + np].copy_from_slice(&g);
            let g = run(&|b| b.hess[(j * d + c) * d + c] = 1.0);
            pj.second[k..k + np].copy_from_slice(&g);
        }
    }
    pj
}

/// Angles, their first derivatives `[N_q][dim]` and Hessians
/// `[N_q][dim][dim]` with respect to original-unit coordinates.
pub fn embed_with_jet(spec: &EmbeddingSpec, coords: &[f64]) -> Result<Jets> {
    Ok(spec.jets_full(coords, false)?.0)
}

/// `∂α/∂θ_emb` as an `N_q × n_params` matrix.
pub fn embedding_param_grad(spec: &EmbeddingSpec, coords: &[f64]) -> Result<Vec<Vec<f64>>> {
    let p = spec.jets_full(coords, true)?.1.expect("requested");
    Ok((0..p.n_out).map(|j| p.value_row(j).to_vec()).collect())
}

/// `∂²α/∂θ∂coord` and `∂³α/∂θ∂coord²` packed in a [`ParamJets`].
pub fn mixed_param_input_grad(spec: &EmbeddingSpec, coords: &[f64]) -> Result<ParamJets> {
    Ok(spec.jets_full(coords, true)?.1.expect("requested"))
}

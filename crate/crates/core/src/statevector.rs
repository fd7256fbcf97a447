//! Dense pure-state simulator.
//!
//! Qubit `q` is bit `q` of the basis index (qubit 0 is the least significant
//! bit). Rotations follow `R_a(θ) = exp(-i θ σ_a / 2)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rotation(axis: Axis, target: usize, angle: f64) -> Self {
        match axis {
            Axis::X => Gate::Rx { target, angle },
            Axis::Y => Gate::Ry { target, angle },
            Axis::Z => Gate::Rz { target, angle },
        }
    }

    /// The inverse gate: negated angle for rotations, CNOT is its own inverse.
    pub fn inverse(self) -> Self {
        match self {
            Gate::Rx { target, angle } => Gate::Rx { target, angle: -angle },
            Gate::Ry { target, angle } => Gate::Ry { target, angle: -angle },
            Gate::Rz { target, angle } => Gate::Rz { target, angle: -angle },
            cnot @ Gate::Cnot { .. } => cnot,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        match *self {
            Gate::Rx { target, .. } | Gate::Ry { target, .. } | Gate::Rz { target, .. } => {
                if target >= n_qubits {
                    return config_err(format!(
                        "rotation target {target} out of range for {n_qubits} qubits"
                    ));
                }
            }
            Gate::Cnot { control, target } => {
                if control >= n_qubits || target >= n_qubits {
                    return config_err(format!(
                        "CNOT ({control} -> {target}) out of range for {n_qubits} qubits"
                    ));
                }
                if control == target {
                    return config_err(format!("CNOT control equals target ({target})"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return config_err(format!(
                "n_qubits = {n_qubits} outside supported range 1..={MAX_QUBITS}"
            ));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes. The length must be a power of two;
    /// normalization is the caller's responsibility.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return config_err(format!("amplitude count {len} is not 2^n with n >= 1"));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return config_err(format!("{n_qubits} qubits exceeds {MAX_QUBITS}"));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Product state `⊗_q R_y(angles[q]) |0⟩`, built directly.
    pub(crate) fn ry_product(angles: &[f64]) -> Self {
        let n = angles.len();
        let mut amplitudes = vec![Complex64::new(1.0, 0.0); 1 << n];
        for (q, &a) in angles.iter().enumerate() {
            let (s, c) = (0.5 * a).sin_cos();
            for (b, amp) in amplitudes.iter_mut().enumerate() {
                *amp *= if b >> q & 1 == 1 { s } else { c };
            }
        }
        Self {
            n_qubits: n,
            amplitudes,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    /// Value-semantics variant of [`StateVector::apply`].
    pub fn applied(mut self, gate: &Gate) -> Result<Self> {
        self.apply(gate)?;
        Ok(self)
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        match *gate {
            Gate::Rx { target, angle } => self.rx(target, angle),
            Gate::Ry { target, angle } => self.ry(target, angle),
            Gate::Rz { target, angle } => self.rz(target, angle),
            Gate::Cnot { control, target } => self.cnot(control, target),
        }
    }

    #[inline]
    pub(crate) fn rotate(&mut self, axis: Axis, q: usize, angle: f64) {
        match axis {
            Axis::X => self.rx(q, angle),
            Axis::Y => self.ry(q, angle),
            Axis::Z => self.rz(q, angle),
        }
    }

    fn pairs(&mut self, q: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let stride = 1usize << q;
        let len = self.amplitudes.len();
        let mut base = 0;
        while base < len {
            for i in base..base + stride {
                let (lo, hi) = self.amplitudes.split_at_mut(i + stride);
                f(&mut lo[i], &mut hi[0]);
            }
            base += stride << 1;
        }
    }

    fn rx(&mut self, q: usize, angle: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        let mis = Complex64::new(0.0, -s);
        self.pairs(q, |a0, a1| {
            let (x0, x1) = (*a0, *a1);
            *a0 = x0 * c + x1 * mis;
            *a1 = x0 * mis + x1 * c;
        });
    }

    fn ry(&mut self, q: usize, angle: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        self.pairs(q, |a0, a1| {
            let (x0, x1) = (*a0, *a1);
            *a0 = x0 * c - x1 * s;
            *a1 = x0 * s + x1 * c;
        });
    }

    fn rz(&mut self, q: usize, angle: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        let lo = Complex64::new(c, -s);
        let hi = Complex64::new(c, s);
        self.pairs(q, |a0, a1| {
            *a0 *= lo;
            *a1 *= hi;
        });
    }

    pub(crate) fn cnot(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for b in 0..self.amplitudes.len() {
            if b & cmask != 0 && b & tmask == 0 {
                self.amplitudes.swap(b, b | tmask);
            }
        }
    }

    /// `⟨Z_q⟩` for every qubit, in a single sweep over the amplitudes.
    pub fn z_expectations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (b, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            for (q, z) in out.iter_mut().enumerate() {
                if b >> q & 1 == 0 {
                    *z += p;
                } else {
                    *z -= p;
                }
            }
        }
        out
    }

    /// `⟨Σ_{j∈qubits} Z_j⟩`.
    pub fn expectation_zsum(&self, qubits: &[usize]) -> Result<f64> {
        if qubits.is_empty() {
            return config_err("Z-sum observable over an empty qubit set");
        }
        if let Some(&q) = qubits.iter().find(|&&q| q >= self.n_qubits) {
            return config_err(format!(
                "observable qubit {q} out of range for {} qubits",
                self.n_qubits
            ));
        }
        let mut total = 0.0;
        for (b, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            for &q in qubits {
                if b >> q & 1 == 0 {
                    total += p;
                } else {
                    total -= p;
                }
            }
        }
        Ok(total)
    }
}

/// Disjoint qubit sets read out as the activator and substrate observables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservablePartition {
    pub activator: Vec<usize>,
    pub substrate: Vec<usize>,
}

impl ObservablePartition {
    pub fn new(activator: Vec<usize>, substrate: Vec<usize>, n_qubits: usize) -> Result<Self> {
        let p = Self {
            activator,
            substrate,
        };
        p.validate(n_qubits)?;
        Ok(p)
    }

    /// Lower half of the register reads the activator, upper half the
    /// substrate; an odd leftover qubit goes to the activator.
    pub fn split_halves(n_qubits: usize) -> Result<Self> {
        if n_qubits < 2 {
            return config_err(format!(
                "two species need at least 2 qubits, got {n_qubits}"
            ));
        }
        let cut = n_qubits.div_ceil(2);
        Self::new((0..cut).collect(), (cut..n_qubits).collect(), n_qubits)
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.activator.is_empty() || self.substrate.is_empty() {
            return config_err("observable partition sets must be nonempty");
        }
        for &q in self.activator.iter().chain(&self.substrate) {
            if q >= n_qubits {
                return config_err(format!(
                    "partition qubit {q} out of range for {n_qubits} qubits"
                ));
            }
        }
        if self.activator.iter().any(|q| self.substrate.contains(q)) {
            return config_err("activator and substrate qubit sets overlap");
        }
        let mut seen = vec![false; n_qubits];
        for &q in self.activator.iter().chain(&self.substrate) {
            if std::mem::replace(&mut seen[q], true) {
                return config_err(format!("qubit {q} listed twice in partition"));
            }
        }
        Ok(())
    }

    pub fn sets(&self) -> [&[usize]; 2] {
        [&self.activator, &self.substrate]
    }
}

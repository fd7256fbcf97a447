//! Encoding circuit, hardware-efficient ansatz and the hybrid model readout.

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSpec;
use crate::error::{config_err, Result};
use crate::statevector::{Axis, ObservablePartition, StateVector};

const LAYER_AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

/// Layered ansatz: per layer, `RX → RY → RZ` on every qubit followed by the
/// CNOT chain `(0,1), (1,2), …, (n-2,n-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::statevector::MAX_QUBITS {
            return config_err(format!("ansatz qubit count {n_qubits} out of range"));
        }
        Ok(Self { n_qubits, n_layers })
    }

    pub fn n_params(&self) -> usize {
        3 * self.n_qubits * self.n_layers
    }

    /// Flat index of the rotation angle for `(layer, qubit, axis)`.
    pub fn index(&self, layer: usize, qubit: usize, axis: Axis) -> usize {
        let a = match axis {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        };
        (layer * self.n_qubits + qubit) * 3 + a
    }

    /// Applies the ansatz without validation; `theta.len()` must equal
    /// `n_params()` and the state must have `n_qubits` qubits.
    pub(crate) fn apply_raw(&self, state: &mut StateVector, theta: &[f64]) {
        let n = self.n_qubits;
        for layer in theta.chunks_exact(3 * n) {
            for (q, rot) in layer.chunks_exact(3).enumerate() {
                for (axis, &angle) in LAYER_AXES.iter().zip(rot) {
                    state.rotate(*axis, q, angle);
                }
            }
            for q in 0..n.saturating_sub(1) {
                state.cnot(q, q + 1);
            }
        }
    }
}

/// Variational angles in `[layer][qubit][x, y, z]` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams(pub Vec<f64>);

impl VariationalParams {
    pub fn zeros(spec: &AnsatzSpec) -> Self {
        Self(vec![0.0; spec.n_params()])
    }

    pub fn validate(&self, spec: &AnsatzSpec) -> Result<()> {
        if self.0.len() != spec.n_params() {
            return config_err(format!(
                "variational parameter count {} does not match ansatz ({} qubits x {} layers x 3 = {})",
                self.0.len(),
                spec.n_qubits,
                spec.n_layers,
                spec.n_params()
            ));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return config_err("non-finite variational parameter");
        }
        Ok(())
    }
}

/// `⊗_q R_y(angles[q])` applied to `state`.
pub fn apply_encoding(state: StateVector, angles: &[f64]) -> Result<StateVector> {
    if angles.len() != state.n_qubits() {
        return config_err(format!(
            "{} encoding angles for {} qubits",
            angles.len(),
            state.n_qubits()
        ));
    }
    let mut state = state;
    for (q, &a) in angles.iter().enumerate() {
        state.rotate(Axis::Y, q, a);
    }
    Ok(state)
}

pub fn apply_ansatz(
    state: StateVector,
    spec: &AnsatzSpec,
    theta: &VariationalParams,
) -> Result<StateVector> {
    theta.validate(spec)?;
    if state.n_qubits() != spec.n_qubits {
        return config_err(format!(
            "ansatz on {} qubits applied to a {}-qubit state",
            spec.n_qubits,
            state.n_qubits()
        ));
    }
    let mut state = state;
    spec.apply_raw(&mut state, &theta.0);
    Ok(state)
}

/// Per-species affine output map `c = offset + scale · ⟨O⟩ / |Q|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl Default for OutputMap {
    fn default() -> Self {
        Self {
            scale: [1.0, 1.0],
            offset: [0.0, 0.0],
        }
    }
}

/// Full hybrid model: trainable embedding feeding one shared ansatz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub ansatz: AnsatzSpec,
    pub theta: VariationalParams,
    pub embedding: EmbeddingSpec,
    pub partition: ObservablePartition,
    pub output: OutputMap,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate(&self.ansatz)?;
        self.partition.validate(self.ansatz.n_qubits)?;
        if self.embedding.n_outputs() != self.ansatz.n_qubits {
            return config_err(format!(
                "embedding produces {} angles but the ansatz has {} qubits",
                self.embedding.n_outputs(),
                self.ansatz.n_qubits
            ));
        }
        if self.output.scale.iter().any(|&s| !(s > 0.0)) {
            return config_err("output scales must be positive");
        }
        self.embedding.validate()
    }

    pub fn n_qubits(&self) -> usize {
        self.ansatz.n_qubits
    }

    /// Factor turning a raw Z-sum into a concentration, per species.
    pub(crate) fn readout_gain(&self) -> [f64; 2] {
        let [qa, qs] = self.partition.sets();
        [
            self.output.scale[0] / qa.len() as f64,
            self.output.scale[1] / qs.len() as f64,
        ]
    }

    /// Raw `(⟨O_A⟩, ⟨O_S⟩)` for encoding angles `enc` and ansatz angles `theta`.
    pub(crate) fn raw_readout(&self, enc: &[f64], theta: &[f64]) -> [f64; 2] {
        let mut state = StateVector::ry_product(enc);
        self.ansatz.apply_raw(&mut state, theta);
        let z = state.z_expectations();
        let [qa, qs] = self.partition.sets();
        [
            qa.iter().map(|&q| z[q]).sum(),
            qs.iter().map(|&q| z[q]).sum(),
        ]
    }

    pub(crate) fn concentrations(&self, raw: [f64; 2]) -> [f64; 2] {
        let g = self.readout_gain();
        [
            self.output.offset[0] + g[0] * raw[0],
            self.output.offset[1] + g[1] * raw[1],
        ]
    }

    /// `(c̃_A, c̃_S)` at an original-unit space–time point.
    pub fn output(&self, coords: &[f64]) -> Result<[f64; 2]> {
        let angles = self.embedding.angles(coords)?;
        Ok(self.concentrations(self.raw_readout(&angles, &self.theta.0)))
    }
}

/// Free-function form of [`ModelSpec::output`].
pub fn model_output(model: &ModelSpec, coords: &[f64]) -> Result<[f64; 2]> {
    model.output(coords)
}

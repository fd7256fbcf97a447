//! Model construction for the three variants and the classical baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::{AnsatzSpec, ModelSpec, OutputMap, VariationalParams};
use crate::diff::{FieldCotangent, FieldJet, FieldModel, Order};
use crate::embedding::{EmbeddingSpec, FnnEmbedding, Gating, NormalizationSpec, QnnEmbedding};
use crate::error::{config_err, Error, Result};
use crate::mlp::{Jets, Mlp};
use crate::physics::Domain;
use crate::statevector::ObservablePartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pinn,
    FnnTeQpinn,
    QnnTeQpinn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Pinn => "pinn",
            Variant::FnnTeQpinn => "fnn_te_qpinn",
            Variant::QnnTeQpinn => "qnn_te_qpinn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    /// Even angles times `x̃`, odd angles times `t̃`.
    Alternating,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub fnn_hidden: Vec<usize>,
    /// QNN embedding depth; defaults to `n_layers`.
    pub qnn_layers: Option<usize>,
    pub gating: GatingMode,
    /// Half-width of the uniform init for circuit angles.
    pub init_range: f64,
    pub output: OutputMap,
    pub partition: Option<ObservablePartition>,
    pub pinn_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FnnTeQpinn,
            n_qubits: 2,
            n_layers: 5,
            fnn_hidden: vec![10, 10],
            qnn_layers: None,
            gating: GatingMode::Alternating,
            init_range: 0.1,
            output: OutputMap::default(),
            partition: None,
            pinn_hidden: vec![32; 4],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Pinn {
            if self.pinn_hidden.is_empty() || self.pinn_hidden.contains(&0) {
                return config_err("PINN hidden widths must be nonempty and positive");
            }
            return Ok(());
        }
        if !(2..=crate::statevector::MAX_QUBITS).contains(&self.n_qubits) {
            return config_err(format!(
                "n_qubits = {} outside 2..={}",
                self.n_qubits,
                crate::statevector::MAX_QUBITS
            ));
        }
        if self.n_layers == 0 {
            return config_err("n_layers must be at least 1");
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return config_err("init_range must be finite and nonnegative");
        }
        if self.fnn_hidden.contains(&0) {
            return config_err("FNN hidden widths must be positive");
        }
        Ok(())
    }

    pub fn qnn_layers(&self) -> usize {
        self.qnn_layers.unwrap_or(self.n_layers)
    }

    pub fn build<R: Rng + ?Sized>(&self, domain: &Domain, rng: &mut R) -> Result<Model> {
        self.validate()?;
        let norm = NormalizationSpec::new(domain.bounds())?;
        let d = norm.dim();
        if self.variant == Variant::Pinn {
            return Ok(Model::Pinn(PinnBaseline::new(norm, &self.pinn_hidden, rng)?));
        }
        let n = self.n_qubits;
        let gating = match self.gating {
            GatingMode::Alternating => Gating::alternating(n),
            GatingMode::None => vec![Gating::None; n],
        };
        let embedding = match self.variant {
            Variant::FnnTeQpinn => EmbeddingSpec::fnn(FnnEmbedding::new(d, &self.fnn_hidden, n, rng)?, norm, gating),
            _ => EmbeddingSpec::qnn(
                QnnEmbedding::new(n, self.qnn_layers(), self.init_range, rng)?,
                norm,
                gating,
            ),
        };
        let ansatz = AnsatzSpec::new(n, self.n_layers)?;
        let theta = (0..ansatz.n_params())
            .map(|_| rng.gen_range(-self.init_range..=self.init_range))
            .collect();
        let partition = match &self.partition {
            Some(p) => p.clone(),
            None => ObservablePartition::split_halves(n)?,
        };
        let spec = ModelSpec {
            ansatz,
            theta: VariationalParams(theta),
            embedding,
            partition,
            output: self.output,
        };
        spec.validate()?;
        Ok(Model::Quantum(spec))
    }
}

/// Classical PINN: tanh MLP on normalized coordinates with two outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnBaseline {
    pub net: Mlp,
    pub normalization: NormalizationSpec,
}

impl PinnBaseline {
    pub fn new<R: Rng + ?Sized>(normalization: NormalizationSpec, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut widths = vec![normalization.dim()];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let mut net = Mlp::new(widths)?;
        net.init_glorot(rng);
        Ok(Self { net, normalization })
    }

    fn to_field(&self, j: &Jets, order: Order) -> FieldJet {
        let s = self.normalization.slopes();
        let d = s.len();
        let mut out = FieldJet::zeros(d);
        out.value = [j.value[0], j.value[1]];
        if order >= Order::First {
            for c in 0..d {
                out.first[c] = [j.g(0, c) * s[c], j.g(1, c) * s[c]];
            }
        }
        if order == Order::Second {
            for c in 0..d - 1 {
                let s2 = s[c] * s[c];
                out.second[c] = [j.h(0, c, c) * s2, j.h(1, c, c) * s2];
            }
        }
        out
    }
}

impl FieldModel for PinnBaseline {
    fn dim(&self) -> usize {
        self.normalization.dim()
    }

    fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn params(&self) -> Vec<f64> {
        self.net.params.clone()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.net.params.copy_from_slice(params);
    }

    fn uses_circuits(&self) -> bool {
        false
    }

    fn jet(&self, coords: &[f64], order: Order) -> Result<(FieldJet, u64)> {
        let u = self.normalization.apply(coords);
        Ok((self.to_field(&self.net.jets(&u), order), 0))
    }

    fn jet_vjp(
        &self,
        coords: &[f64],
        order: Order,
        seed: &dyn Fn(&FieldJet) -> FieldCotangent,
    ) -> Result<(FieldJet, Vec<f64>, u64)> {
        let u = self.normalization.apply(coords);
        let s = self.normalization.slopes();
        let d = s.len();
        let mut field = None;
        let (_, grad) = self.net.jets_vjp(&u, |j| {
            let f = self.to_field(j, order);
            let bar = seed(&f);
            field = Some(f);
            let mut b = Jets::zeros(2, d);
            for i in 0..2 {
                b.value[i] = bar.value[i];
                if order >= Order::First {
                    for c in 0..d {
                        b.grad[i * d + c] = bar.first[c][i] * s[c];
                    }
                }
                if order == Order::Second {
                    for c in 0..d - 1 {
                        b.hess[(i * d + c) * d + c] = bar.second[c][i] * s[c] * s[c];
                    }
                }
            }
            b
        });
        Ok((field.expect("seed closure ran"), grad, 0))
    }
}

/// Any trainable field model, serializable for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Model {
    Quantum(ModelSpec),
    Pinn(PinnBaseline),
}

impl Model {
    pub fn as_field(&self) -> &dyn FieldModel {
        match self {
            Model::Quantum(m) => m,
            Model::Pinn(p) => p,
        }
    }

    pub fn as_field_mut(&mut self) -> &mut dyn FieldModel {
        match self {
            Model::Quantum(m) => m,
            Model::Pinn(p) => p,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Model::Pinn(_) => Variant::Pinn,
            Model::Quantum(m) if m.embedding.is_quantum() => Variant::QnnTeQpinn,
            Model::Quantum(_) => Variant::FnnTeQpinn,
        }
    }

    pub fn n_qubits(&self) -> Option<usize> {
        match self {
            Model::Quantum(m) => Some(m.n_qubits()),
            Model::Pinn(_) => None,
        }
    }

    /// `(c_A, c_S)` at one point.
    pub fn predict(&self, coords: &[f64]) -> Result<[f64; 2]> {
        Ok(self.as_field().jet(coords, Order::Value)?.0.value)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Quantum(m) => m.validate(),
            Model::Pinn(p) => {
                p.normalization.validate()?;
                if p.net.d_in() != p.normalization.dim() || p.net.d_out() != 2 {
                    return Err(Error::Shape(format!("PINN widths {:?}", p.net.widths)));
                }
                Ok(())
            }
        }
    }
}

impl FieldModel for Model {
    fn dim(&self) -> usize {
        self.as_field().dim()
    }
    fn n_params(&self) -> usize {
        self.as_field().n_params()
    }
    fn params(&self) -> Vec<f64> {
        self.as_field().params()
    }
    fn set_params(&mut self, params: &[f64]) {
        self.as_field_mut().set_params(params)
    }
    fn uses_circuits(&self) -> bool {
        self.as_field().uses_circuits()
    }
    fn jet(&self, coords: &[f64], order: Order) -> Result<(FieldJet, u64)> {
        self.as_field().jet(coords, order)
    }
    fn jet_vjp(
        &self,
        coords: &[f64],
        order: Order,
        seed: &dyn Fn(&FieldJet) -> FieldCotangent,
    ) -> Result<(FieldJet, Vec<f64>, u64)> {
        self.as_field().jet_vjp(coords, order, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builds_every_variant() {
        let d = Domain::interval_1d();
        for v in [Variant::Pinn, Variant::FnnTeQpinn, Variant::QnnTeQpinn] {
            let cfg = ModelConfig {
                variant: v,
                ..Default::default()
            };
            let m = cfg.build(&d, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            m.validate().unwrap();
            assert_eq!(m.variant(), v);
            let n = match v {
                Variant::Pinn => 96 + 3 * 1056 + 66,
                Variant::FnnTeQpinn => 30 + 110 + 22 + 30,
                Variant::QnnTeQpinn => 30 + 30,
            };
            assert_eq!(m.n_params(), n);
            assert_eq!(m.uses_circuits(), v != Variant::Pinn);
        }
    }

    #[test]
    fn pinn_jets_match_finite_differences() {
        let d = Domain::square_2d();
        let cfg = ModelConfig {
            variant: Variant::Pinn,
            pinn_hidden: vec![6, 5],
            ..Default::default()
        };
        let m = cfg.build(&d, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let p = [0.3, -0.2, 0.4];
        let (jet, _) = m.jet(&p, Order::Second).unwrap();
        let h = 1e-4;
        for c in 0..3 {
            let mut a = p;
            let mut b = p;
            a[c] += h;
            b[c] -= h;
            let (fa, fb, f0) = (m.predict(&a).unwrap(), m.predict(&b).unwrap(), m.predict(&p).unwrap());
            for i in 0..2 {
                assert!((jet.first[c][i] - (fa[i] - fb[i]) / (2.0 * h)).abs() < 1e-7);
                if c < 2 {
                    let fd2 = (fa[i] - 2.0 * f0[i] + fb[i]) / (h * h);
                    assert!((jet.second[c][i] - fd2).abs() < 1e-5);
                } else {
                    assert_eq!(jet.second[c][i], 0.0);
                }
            }
        }
    }
}

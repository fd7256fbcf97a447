#![allow(dead_code)]

use qpinn::circuits::{AnsatzSpec, ModelSpec, OutputMap, VariationalParams};
use qpinn::embedding::{EmbeddingSpec, NormalizationSpec};
use qpinn::mlp::Mlp;
use qpinn::model::{GatingMode, Model, ModelConfig, Variant};
use qpinn::physics::{
    sample_collocation, CollocationConfig, Domain, InitialCondition, LossWeights, Problem, RDParams,
};
use qpinn::statevector::ObservablePartition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random hybrid model with angles spread over the full circle.
pub fn random_model(variant: Variant, n_qubits: usize, n_layers: usize, domain: &Domain, seed: u64) -> Model {
    let cfg = ModelConfig {
        variant,
        n_qubits,
        n_layers,
        fnn_hidden: vec![3],
        qnn_layers: Some(1 + (seed as usize % 2)),
        gating: if seed % 3 == 0 { GatingMode::None } else { GatingMode::Alternating },
        init_range: std::f64::consts::PI,
        output: OutputMap {
            scale: [0.8, 1.2],
            offset: [0.3, -0.1],
        },
        partition: None,
        pinn_hidden: vec![5, 4],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = cfg.build(domain, &mut rng).unwrap();
    if let Model::Quantum(spec) = &mut m {
        if !spec.embedding.is_quantum() {
            for p in spec.embedding.params_mut() {
                *p = rng.gen_range(-1.5..1.5);
            }
        }
    }
    m
}

/// `c̃_A = cos x`, `c̃_S = 1` on two qubits with no ansatz layers.
pub fn cosine_model() -> ModelSpec {
    let norm = NormalizationSpec::new(vec![(-1.0, 1.0), (0.0, 1.0)]).unwrap();
    let mut net = Mlp::new(vec![2, 2]).unwrap();
    net.params = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let embedding = EmbeddingSpec::fnn(
        qpinn::embedding::FnnEmbedding { net },
        norm,
        vec![qpinn::embedding::Gating::None; 2],
    );
    let ansatz = AnsatzSpec::new(2, 0).unwrap();
    ModelSpec {
        ansatz,
        theta: VariationalParams(vec![]),
        embedding,
        partition: ObservablePartition::new(vec![0], vec![1], 2).unwrap(),
        output: OutputMap::default(),
    }
}

pub fn small_problem(domain: Domain, seed: u64) -> Problem {
    let sd = domain.spatial_dim();
    let cfg = CollocationConfig {
        mode: qpinn::physics::SamplingMode::LatinHypercube,
        interior: if sd == 1 { vec![2, 2] } else { vec![2, 1, 1] },
        boundary_times: 2,
        boundary_space: 1,
        initial: vec![2; sd],
    };
    let colloc = sample_collocation(&domain, &cfg, seed).unwrap();
    let ic = if sd == 1 { InitialCondition::double_bump() } else { InitialCondition::gaussian_2d() };
    let beta = RDParams {
        d_a: 0.05,
        d_s: 0.2,
        kappa1: 0.9,
        kappa2: 0.7,
        kappa3: 0.3,
    };
    let mut p = Problem::new(domain, beta, ic, colloc).unwrap();
    p.weights = LossWeights {
        boundary: vec![1.3],
        initial: 0.7,
    };
    p
}

/// Central differences of a scalar function of the parameters.
pub fn fd_gradient(model: &Model, h: f64, f: impl Fn(&Model) -> f64) -> Vec<f64> {
    use qpinn::diff::FieldModel;
    let p0 = model.params();
    (0..p0.len())
        .map(|i| {
            let mut m = model.clone();
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            m.set_params(&p);
            let fp = f(&m);
            p[i] = p0[i] - h;
            m.set_params(&p);
            let fm = f(&m);
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Relative 1e-4 or absolute 1e-7 per component.
pub fn grad_close(a: &[f64], b: &[f64]) -> Option<(usize, f64, f64)> {
    a.iter()
        .zip(b)
        .enumerate()
        .find(|(_, (x, y))| {
            let d = (*x - *y).abs();
            d > 1e-7 && d > 1e-4 * y.abs()
        })
        .map(|(i, (x, y))| (i, *x, *y))
}

//! Build both hybrid variants and the classical baseline, then evaluate
//! field values, input derivatives and parameter counts at one point.
//!
//! cargo run --example hybrid_model

use qpinn::diff::{input_gradient, input_laplacian, FieldModel, Order};
use qpinn::model::{ModelConfig, Variant};
use qpinn::physics::Domain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qpinn::Result<()> {
    let domain = Domain::interval_1d();
    let point = [0.25, 0.4];
    for variant in [Variant::FnnTeQpinn, Variant::QnnTeQpinn, Variant::Pinn] {
        let cfg = ModelConfig {
            variant,
            n_qubits: 4,
            init_range: 0.5,
            ..ModelConfig::default()
        };
        let model = cfg.build(&domain, &mut ChaCha8Rng::seed_from_u64(1))?;
        let c = model.predict(&point)?;
        let grad = input_gradient(&model, &point)?;
        let lr = input_laplacian(&model, &point)?;
        let (_, evals) = model.jet(&point, Order::Second)?;
        println!("{}: {} parameters", variant.name(), model.n_params());
        println!("  c          = ({:+.6}, {:+.6})", c[0], c[1]);
        println!("  dc/dx      = ({:+.6}, {:+.6})", grad[0][0], grad[1][0]);
        println!("  dc/dt      = ({:+.6}, {:+.6})", lr.dt[0], lr.dt[1]);
        println!("  d²c/dx²    = ({:+.6}, {:+.6})", lr.laplacian[0], lr.laplacian[1]);
        println!("  circuit executions for the second-order jet: {evals}");
    }
    Ok(())
}

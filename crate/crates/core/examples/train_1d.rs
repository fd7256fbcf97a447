//! Train one model on the default 1D double-bump problem and print the
//! loss history.
//!
//! cargo run --release --example train_1d -- [pinn|fnn|qnn] [epochs]

use qpinn::model::{ModelConfig, Variant};
use qpinn::physics::{sample_collocation, CollocationConfig, Domain, InitialCondition, Problem, RDParams};
use qpinn::reference::{solve_reference, ReferenceConfig};
use qpinn::train::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qpinn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let variant = match args.get(1).map(String::as_str) {
        Some("pinn") => Variant::Pinn,
        Some("qnn") => Variant::QnnTeQpinn,
        _ => Variant::FnnTeQpinn,
    };
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);

    let domain = Domain::interval_1d();
    let beta = RDParams::default();
    let ic = InitialCondition::double_bump();
    let colloc = sample_collocation(&domain, &CollocationConfig::default_1d(), 0)?;
    let problem = Problem::new(domain.clone(), beta, ic.clone(), colloc)?;
    let reference = solve_reference(&domain, &ReferenceConfig::default_1d(), &beta, &ic)?;

    let mcfg = ModelConfig { variant, ..ModelConfig::default() };
    let model = mcfg.build(&domain, &mut ChaCha8Rng::seed_from_u64(0))?;
    let cfg = TrainConfig { epochs, metrics_stride: 8, ..TrainConfig::default() };
    let (_, history) = train(model, &cfg, &problem, Some(&reference), 0)?;
    for r in &history {
        let mse = r.mse.unwrap_or([f64::NAN; 2]);
        println!(
            "{:4} total {:.4e} (pde {:.3e} bc {:.3e} ic {:.3e})  mse_A {:.3e}  mse_S {:.3e}  {:8.1} ms  {} evals",
            r.epoch, r.loss.total, r.loss.l_pde, r.loss.l_bc_total(), r.loss.l_ic, mse[0], mse[1], r.wall_ms, r.circuit_evals
        );
    }
    Ok(())
}

//! Manufactured-solution closure. A 2-qubit teacher with encoding angles
//! linear in the inputs defines the target field; its residual becomes the
//! source term, so the teacher solves the forced problem exactly. A student
//! of the same architecture is then trained from scratch.
//!
//! cargo run --release --example manufactured -- [epochs] [student seed]

use std::f64::consts::PI;
use std::sync::Arc;

use qpinn::diff::{FieldModel, Order};
use qpinn::model::{GatingMode, Model, ModelConfig, Variant};
use qpinn::physics::{
    sample_collocation, total_loss, CollocationConfig, Domain, InitialCondition, PointFields, Problem, RDParams,
    Sources,
};
use qpinn::train::{TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Linear embedding (no hidden layer), no gating.
fn architecture() -> ModelConfig {
    ModelConfig {
        variant: Variant::FnnTeQpinn,
        fnn_hidden: vec![],
        gating: GatingMode::None,
        ..ModelConfig::default()
    }
}

/// `α0 = π x̂ + 0.4 t̂ + 0.1`, `α1 = 0.6 t̂ + 0.3`. The π slope wraps the
/// angle by 2π across the interval, so the field is periodic.
fn teacher(domain: &Domain) -> qpinn::Result<Model> {
    let cfg = ModelConfig {
        init_range: 0.8,
        ..architecture()
    };
    let mut m = cfg.build(domain, &mut ChaCha8Rng::seed_from_u64(11))?;
    if let Model::Quantum(spec) = &mut m {
        // W is 2 x 2 row-major over (x̂, t̂), then b
        spec.embedding
            .params_mut()
            .copy_from_slice(&[PI, 0.4, 0.0, 0.6, 0.1, 0.3]);
    }
    Ok(m)
}

fn main() -> qpinn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let domain = Domain::interval_1d();
    let beta = RDParams::default();
    let target = Arc::new(teacher(&domain)?);

    let field = {
        let t = target.clone();
        move |p: &[f64]| PointFields::from(&t.jet(p, Order::Second).expect("teacher jet").0)
    };
    let ic = {
        let t = target.clone();
        InitialCondition::custom(move |x| t.predict(&[x[0], 0.0]).expect("teacher value"))
    };
    let cfg = CollocationConfig {
        interior: vec![8, 8],
        boundary_times: 8,
        initial: vec![16],
        ..CollocationConfig::default_1d()
    };
    let mut problem = Problem::new(domain.clone(), beta, ic, sample_collocation(&domain, &cfg, 0)?)?;
    problem.sources = Sources::manufactured(beta, field);

    let clamped = total_loss(target.as_ref(), &problem)?;
    println!("teacher: L_PDE {:.3e}  total {:.3e}", clamped.l_pde, clamped.total);

    let student = architecture().build(&domain, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let tcfg = TrainConfig {
        epochs,
        record_wall_time: false,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(student, tcfg, &problem, None, seed)?;
    trainer.run()?;
    for r in &trainer.state.history {
        if r.epoch % 20 == 0 || r.epoch == trainer.state.epoch {
            println!("{:4} total {:.4e}", r.epoch, r.loss.total);
        }
    }
    println!(
        "best {:.3e} at epoch {}",
        trainer.state.best_loss, trainer.state.best_epoch
    );
    Ok(())
}

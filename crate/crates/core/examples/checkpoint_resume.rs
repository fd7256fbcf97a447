//! Train a few epochs, checkpoint, restore and continue. The resumed
//! history matches an uninterrupted run exactly.
//!
//! cargo run --release --example checkpoint_resume

use qpinn::model::ModelConfig;
use qpinn::physics::{sample_collocation, CollocationConfig, Domain, InitialCondition, Problem, RDParams};
use qpinn::train::{Checkpoint, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qpinn::Result<()> {
    let domain = Domain::interval_1d();
    let cfg = CollocationConfig {
        interior: vec![8, 8],
        boundary_times: 8,
        initial: vec![16],
        ..CollocationConfig::default_1d()
    };
    let colloc = sample_collocation(&domain, &cfg, 0)?;
    let problem = Problem::new(domain.clone(), RDParams::default(), InitialCondition::double_bump(), colloc)?;
    let mcfg = ModelConfig::default();
    let tcfg = TrainConfig {
        epochs: 6,
        record_wall_time: false,
        ..TrainConfig::default()
    };
    let model = mcfg.build(&domain, &mut ChaCha8Rng::seed_from_u64(5))?;

    let mut straight = Trainer::new(model.clone(), tcfg.clone(), &problem, None, 5)?;
    straight.run()?;

    let mut first = Trainer::new(model, tcfg.clone(), &problem, None, 5)?;
    first.run_until(3)?;
    let path = std::env::temp_dir().join("qpinn-example-checkpoint.json");
    Checkpoint::new(serde_json::Value::Null, first.state.clone()).save(&path)?;

    let restored = Checkpoint::load(&path)?;
    restored.check_model(&mcfg)?;
    let mut resumed = Trainer::resume(restored.state, tcfg, &problem, None)?;
    resumed.run()?;

    for (a, b) in straight.state.history.iter().zip(&resumed.state.history) {
        println!(
            "epoch {}  straight {:.16e}  resumed {:.16e}",
            a.epoch, a.loss.total, b.loss.total
        );
    }
    println!("identical: {}", straight.state.history == resumed.state.history);
    let _ = std::fs::remove_file(path);
    Ok(())
}

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use qpinn::diff::{loss_grad, FieldModel};
use qpinn::error::Error;
use qpinn::model::{Model, ModelConfig, Variant};
use qpinn::physics::{
    evaluate, sample_collocation, CollocationConfig, Domain, InitialCondition, Problem, RDParams, Sources,
};
use qpinn::train::{Checkpoint, OptimizerKind, TrainConfig, Trainer, CHECKPOINT_VERSION};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_problem() -> Problem {
    let domain = Domain::interval_1d();
    let cfg = CollocationConfig {
        interior: vec![4, 4],
        boundary_times: 4,
        initial: vec![8],
        ..CollocationConfig::default_1d()
    };
    let colloc = sample_collocation(&domain, &cfg, 0).unwrap();
    Problem::new(domain, RDParams::default(), InitialCondition::double_bump(), colloc).unwrap()
}

fn model(variant: Variant, seed: u64) -> Model {
    let cfg = ModelConfig {
        variant,
        pinn_hidden: vec![8, 8],
        ..ModelConfig::default()
    };
    cfg.build(&Domain::interval_1d(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn quiet(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        record_wall_time: false,
        ..TrainConfig::default()
    }
}

#[test]
fn one_epoch_one_record() {
    let p = tiny_problem();
    let mut t = Trainer::new(model(Variant::FnnTeQpinn, 0), quiet(1), &p, None, 0).unwrap();
    t.run().unwrap();
    assert_eq!(t.state.history.len(), 1);
    assert_eq!(t.state.history[0].epoch, 1);
    assert!(t.state.history[0].circuit_evals > 0);
}

#[test]
fn pinn_spends_no_circuits() {
    let p = tiny_problem();
    let mut t = Trainer::new(model(Variant::Pinn, 0), quiet(3), &p, None, 0).unwrap();
    t.run().unwrap();
    assert!(t.state.history.iter().all(|r| r.circuit_evals == 0));
}

#[test]
fn initial_gradient_is_the_oracle_gradient() {
    let p = tiny_problem();
    let m = model(Variant::QnnTeQpinn, 2);
    let (_, g) = loss_grad(&m, &p).unwrap();
    for kind in [OptimizerKind::Adam, OptimizerKind::Lbfgs] {
        let cfg = TrainConfig {
            optimizer: kind,
            ..quiet(1)
        };
        let mut t = Trainer::new(m.clone(), cfg, &p, None, 0).unwrap();
        t.run().unwrap();
        let before = m.params();
        let after = t.state.model.params();
        // first steps of both optimizers move against the gradient
        let dot: f64 = g.iter().zip(before.iter().zip(&after)).map(|(g, (b, a))| g * (a - b)).sum();
        assert!(dot < 0.0, "{kind:?}");
    }
    let mut t = Trainer::new(m.clone(), quiet(1), &p, None, 0).unwrap();
    t.run_until(0).unwrap();
    assert!(t.state.history.is_empty());
}

#[test]
fn best_snapshot_is_the_minimum_record() {
    let p = tiny_problem();
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        adam: qpinn::optim::AdamConfig {
            lr: 0.3,
            ..Default::default()
        },
        ..quiet(12)
    };
    let mut t = Trainer::new(model(Variant::FnnTeQpinn, 3), cfg, &p, None, 0).unwrap();
    t.run().unwrap();
    let s = &t.state;
    let (i, min) = s
        .history
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.loss.total.total_cmp(&b.1.loss.total))
        .map(|(i, r)| (i, r.loss.total))
        .unwrap();
    assert_eq!(s.best_loss, min);
    assert_eq!(s.best_epoch, s.history[i].epoch);
    let again = evaluate(&s.best_model(), &p, false).unwrap();
    assert_eq!(again.breakdown.total, min);
    let mut best_so_far = f64::INFINITY;
    for r in &s.history {
        let next = best_so_far.min(r.loss.total);
        assert!(next <= best_so_far);
        best_so_far = next;
    }
}

#[test]
fn tolerance_stops_early() {
    let p = tiny_problem();
    let cfg = TrainConfig {
        tolerance: 1e12,
        ..quiet(10)
    };
    let mut t = Trainer::new(model(Variant::Pinn, 0), cfg, &p, None, 0).unwrap();
    t.run().unwrap();
    assert_eq!(t.state.history.len(), 1);
}

#[test]
fn non_finite_loss_aborts_with_partial_history() {
    let mut p = tiny_problem();
    let n = p.colloc.interior.len();
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    // finite for the first three loss evaluations, then NaN
    p.sources = Sources::custom(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) < 3 * n {
            [0.0, 0.0]
        } else {
            [f64::NAN, 0.0]
        }
    });
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        ..quiet(10)
    };
    let mut t = Trainer::new(model(Variant::Pinn, 0), cfg, &p, None, 0).unwrap();
    match t.run() {
        Err(Error::NonFinite { epoch, component }) => {
            assert_eq!(epoch, 3);
            assert!(component.contains("pde") || component.contains("l_A") || component == "total", "{component}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(t.state.history.len(), 2);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let p = tiny_problem();
    let mut t = Trainer::new(model(Variant::FnnTeQpinn, 4), quiet(2), &p, None, 9).unwrap();
    t.run().unwrap();
    let ck = Checkpoint::new(serde_json::json!({"note": "x"}), t.state.clone());
    let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
    assert_eq!(back, ck);
    let (a, b) = (t.state.model.params(), back.state.model.params());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn checkpoint_rejects_mismatches() {
    let p = tiny_problem();
    let t = Trainer::new(model(Variant::FnnTeQpinn, 4), quiet(1), &p, None, 0).unwrap();
    let ck = Checkpoint::new(serde_json::Value::Null, t.state.clone());
    let wrong = ModelConfig {
        n_qubits: 4,
        ..ModelConfig::default()
    };
    let msg = ck.check_model(&wrong).unwrap_err().to_string();
    assert!(msg.contains("n_qubits = 2") && msg.contains("n_qubits = 4"), "{msg}");
    let wrong = ModelConfig {
        n_layers: 7,
        ..ModelConfig::default()
    };
    let msg = ck.check_model(&wrong).unwrap_err().to_string();
    assert!(msg.contains('5') && msg.contains('7'), "{msg}");
    let wrong = ModelConfig {
        variant: Variant::Pinn,
        ..ModelConfig::default()
    };
    assert!(ck.check_model(&wrong).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
    v["version"] = serde_json::json!(CHECKPOINT_VERSION + 1);
    assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(Error::Checkpoint(_))));
    v["format"] = serde_json::json!("something else");
    assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(Error::Checkpoint(_))));
}

#[test]
fn resume_continues_the_run_exactly() {
    let p = tiny_problem();
    for kind in [OptimizerKind::Adam, OptimizerKind::Lbfgs] {
        let cfg = TrainConfig {
            optimizer: kind,
            ..quiet(5)
        };
        let m = model(Variant::FnnTeQpinn, 6);
        let mut straight = Trainer::new(m.clone(), cfg.clone(), &p, None, 1).unwrap();
        straight.run().unwrap();

        let mut first = Trainer::new(m, cfg.clone(), &p, None, 1).unwrap();
        first.run_until(2).unwrap();
        let json = Checkpoint::new(serde_json::Value::Null, first.state.clone()).to_json().unwrap();
        let restored = Checkpoint::from_json(&json).unwrap();

        let mut idle = Trainer::resume(restored.state.clone(), cfg.clone(), &p, None).unwrap();
        idle.run_until(2).unwrap();
        assert_eq!(idle.state.history, first.state.history);

        let mut resumed = Trainer::resume(restored.state, cfg, &p, None).unwrap();
        resumed.run().unwrap();
        assert_eq!(resumed.state.history, straight.state.history, "{kind:?}");
        assert_eq!(resumed.state.model.params(), straight.state.model.params());
    }
}

#[test]
fn invalid_training_config_is_rejected() {
    let p = tiny_problem();
    for cfg in [
        TrainConfig { epochs: 0, ..quiet(1) },
        TrainConfig {
            metrics_stride: 0,
            ..quiet(1)
        },
    ] {
        assert!(matches!(
            Trainer::new(model(Variant::Pinn, 0), cfg, &p, None, 0).err(),
            Some(Error::Config(_))
        ));
    }
}

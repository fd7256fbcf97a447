//! A small qubit sweep through the run front end, written under a
//! temporary directory.
//!
//! cargo run --release --example sweep

use qpinn::cli::{cmd_sweep, SweepAxis};
use qpinn::config::RunConfig;
use qpinn::model::Variant;
use qpinn::physics::CollocationConfig;

fn main() -> qpinn::Result<()> {
    let mut cfg = RunConfig::default_for(1)?;
    cfg.problem.collocation = CollocationConfig {
        interior: vec![8, 8],
        boundary_times: 8,
        initial: vec![16],
        ..CollocationConfig::default_1d()
    };
    cfg.reference.grid = vec![128];
    cfg.training.epochs = 3;
    cfg.training.metrics_stride = 8;
    cfg.sweep.variants = vec![Variant::FnnTeQpinn, Variant::Pinn];
    let out = std::env::temp_dir().join("qpinn-example-sweep");
    let rows = cmd_sweep(&cfg, SweepAxis::Qubits, &[2, 3], &out)?;
    for r in &rows {
        println!(
            "qubits {}  {:14}  final {:.4e}  {}",
            r.value,
            r.variant.name(),
            r.final_total.unwrap_or(f64::NAN),
            r.failure.as_deref().unwrap_or("ok")
        );
    }
    println!("table: {}", out.join("sweep_qubits.csv").display());
    Ok(())
}

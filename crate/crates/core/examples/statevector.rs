//! Build a small circuit gate by gate and read the Z observables.
//!
//! cargo run --example statevector

use std::f64::consts::PI;

use qpinn::statevector::{Gate, ObservablePartition, StateVector};

fn main() -> qpinn::Result<()> {
    // qubit 0 is the least significant bit of the basis index
    let mut s = StateVector::zero(3)?;
    s.apply(&Gate::Ry { target: 0, angle: PI / 2.0 })?;
    s.apply(&Gate::Cnot { control: 0, target: 1 })?;
    s.apply(&Gate::Rx { target: 2, angle: PI / 3.0 })?;

    for (k, a) in s.amplitudes().iter().enumerate() {
        if a.norm() > 1e-12 {
            println!("|{k:03b}⟩  {:+.4} {:+.4}i", a.re, a.im);
        }
    }
    println!("norm² = {:.15}", s.norm_sqr());
    println!("⟨Z_q⟩ = {:?}", s.z_expectations());

    let p = ObservablePartition::split_halves(3)?;
    let [qa, qs] = p.sets();
    println!(
        "species sums: A over {qa:?} = {:.4}, S over {qs:?} = {:.4}",
        s.expectation_zsum(qa)?,
        s.expectation_zsum(qs)?
    );

    // undo everything
    for g in [
        Gate::Rx { target: 2, angle: PI / 3.0 },
        Gate::Cnot { control: 0, target: 1 },
        Gate::Ry { target: 0, angle: PI / 2.0 },
    ] {
        s.apply(&g.inverse())?;
    }
    println!("after inverses: amplitude of |000⟩ = {:.15}", s.amplitudes()[0].re);
    Ok(())
}

//! Parameter-shift derivatives of a circuit expectation against closed forms.
//!
//! cargo run --example shift_rules

use qpinn::diff::{shift_first, shift_second, ShiftEvaluator};
use qpinn::statevector::{Gate, StateVector};

fn main() {
    // ⟨Z_0⟩ after RY(a) then RX(b) on one qubit is cos a · cos b
    let f = |ang: &[f64]| {
        let mut s = StateVector::zero(1).expect("one qubit");
        s.apply(&Gate::Ry { target: 0, angle: ang[0] }).expect("gate");
        s.apply(&Gate::Rx { target: 0, angle: ang[1] }).expect("gate");
        s.z_expectations()[0]
    };
    let ev = ShiftEvaluator::new(f, vec![0, 1]);
    let (a, b) = (0.7, -1.1);
    let x = [a, b];

    println!("d/da       shift {:+.15}  exact {:+.15}", shift_first(&ev, 0, &x), -a.sin() * b.cos());
    println!("d/db       shift {:+.15}  exact {:+.15}", shift_first(&ev, 1, &x), -a.cos() * b.sin());
    println!("d²/da²     shift {:+.15}  exact {:+.15}", shift_second(&ev, 0, 0, &x), -a.cos() * b.cos());
    println!("d²/da db   shift {:+.15}  exact {:+.15}", shift_second(&ev, 0, 1, &x), a.sin() * b.sin());
}

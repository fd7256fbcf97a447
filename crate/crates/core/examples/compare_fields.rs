//! Field-error metrics between a prediction and a reference grid.
//!
//! cargo run --example compare_fields

use qpinn::metrics::compare;
use qpinn::reference::GridSolution;

fn grid(c_a: Vec<f64>, c_s: Vec<f64>) -> GridSolution {
    GridSolution {
        axes: vec![vec![0.0, 0.5]],
        times: vec![0.0],
        c_a: vec![c_a],
        c_s: vec![c_s],
        meta: None,
    }
}

fn main() -> qpinn::Result<()> {
    let reference = grid(vec![3.0, 4.0], vec![1.0, 1.0]);
    let prediction = grid(vec![3.0, 5.0], vec![1.1, 1.1]);
    let rep = compare(&prediction, &reference)?;
    for (name, i) in [("A", 0), ("S", 1)] {
        let e = rep.species(i);
        println!(
            "{name}: mse {:.4}  rel-L2 {:?}  rel-Linf {:?}  max |err| {:.4}",
            e.mse,
            e.rel_l2,
            e.rel_linf,
            e.abs_error[0].iter().cloned().fold(0.0, f64::max)
        );
    }
    Ok(())
}

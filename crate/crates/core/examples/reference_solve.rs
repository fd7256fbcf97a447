//! Method-of-lines reference solutions for the default 1D and 2D problems.
//!
//! cargo run --release --example reference_solve

use qpinn::physics::{Domain, InitialCondition, RDParams};
use qpinn::reference::{solve_reference, ReferenceConfig};

fn summarize(label: &str, domain: &Domain, cfg: &ReferenceConfig, ic: &InitialCondition) -> qpinn::Result<()> {
    let sol = solve_reference(domain, cfg, &RDParams::default(), ic)?;
    let stats = sol.meta.as_ref().map(|m| m.stats).unwrap_or_default();
    println!("{label}: {} nodes, {} snapshots, {stats:?}", sol.n_nodes(), sol.times.len());
    for (s, t) in sol.times.iter().enumerate() {
        let max_a = sol.c_a[s].iter().cloned().fold(f64::MIN, f64::max);
        let mean_s = sol.c_s[s].iter().sum::<f64>() / sol.n_nodes() as f64;
        println!("  t = {t:.3}  max c_A = {max_a:.5}  mean c_S = {mean_s:.5}");
    }
    Ok(())
}

fn main() -> qpinn::Result<()> {
    let cfg1 = ReferenceConfig {
        snapshots: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        ..ReferenceConfig::default_1d()
    };
    summarize("1D double bump", &Domain::interval_1d(), &cfg1, &InitialCondition::double_bump())?;
    let cfg2 = ReferenceConfig {
        grid: vec![64, 64],
        ..ReferenceConfig::default_2d()
    };
    summarize("2D gaussian", &Domain::square_2d(), &cfg2, &InitialCondition::gaussian_2d())
}

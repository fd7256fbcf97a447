//! Parse a partial TOML run configuration and print the fully resolved
//! echo that every output directory receives.
//!
//! cargo run --example run_config

use qpinn::config::RunConfig;

const PARTIAL: &str = r#"
seed = 7

[problem]
dimension = 2

[model]
variant = "qnn_te_qpinn"
n_qubits = 4

[training]
epochs = 50
optimizer = "adam"
"#;

fn main() -> qpinn::Result<()> {
    let cfg = RunConfig::from_toml(PARTIAL)?;
    print!("{}", cfg.to_toml()?);
    // the echo parses back to the same configuration
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()?)?, cfg);

    match RunConfig::from_toml("[model]\nn_qubit = 3\n") {
        Err(e) => println!("# rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are rejected"),
    }
    Ok(())
}

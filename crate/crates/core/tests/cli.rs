use std::fs;
use std::path::Path;

use qpinn::cli::{
    cmd_infer, cmd_reference, cmd_sweep, cmd_train, history_csv, load_checkpoint, run_id, train_run, SweepAxis,
    ERROR_COLUMNS, SWEEP_COLUMNS,
};
use qpinn::config::RunConfig;
use qpinn::error::Error;
use qpinn::metrics::compare;
use qpinn::train::HISTORY_COLUMNS;

const SMALL: &str = r#"
[problem.collocation]
interior = [4, 4]
boundary_times = 4
initial = [8]

[reference]
grid = [32]
snapshots = [0.0, 0.5, 1.0]

[training]
epochs = 2
record_wall_time = false
"#;

fn small(extra: &str) -> RunConfig {
    RunConfig::from_toml(&format!("{extra}\n{SMALL}")).unwrap()
}

fn epochs(n: usize) -> RunConfig {
    let mut cfg = small("");
    cfg.training.epochs = n;
    cfg
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn history_header_is_pinned() {
    let header = history_csv(&[]);
    assert_eq!(
        header.trim_end(),
        "epoch,total,l_pde,l_A,l_S,l_bc,l_ic,mse_A,mse_S,wall_ms,circuit_evals"
    );
    assert_eq!(header.trim_end(), HISTORY_COLUMNS.join(","));
    assert_eq!(ERROR_COLUMNS.join(","), "variant,metric,species,value");
    assert_eq!(SWEEP_COLUMNS.len(), 11);
}

#[test]
fn steady_state_reference_rows_are_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(
        r#"
[problem.ic]
kind = "homogeneous_steady_state"
"#,
    );
    let g = cmd_reference(&cfg, dir.path()).unwrap();
    let rows = lines(&dir.path().join("reference.csv"));
    assert_eq!(rows[0], "x,t,c_A,c_S");
    assert_eq!(rows.len(), 1 + 32 * 3);
    for row in &rows[1..] {
        let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - 1e-3).abs() < 1e-9, "{row}");
        assert!((v[3] - 1e3).abs() < 1e-6, "{row}");
    }
    assert_eq!(g.times, vec![0.0, 0.5, 1.0]);
    assert!(dir.path().join("reference.meta.json").exists());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn reference_rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small("");
    cmd_reference(&cfg, a.path()).unwrap();
    cmd_reference(&cfg, b.path()).unwrap();
    for f in ["reference.csv", "config.toml"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn two_dimensional_reference_has_requested_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(
        r#"
[problem]
dimension = 2

[reference]
grid = [16, 16]
snapshots = [0.0, 0.330, 0.665, 1.0]
"#,
    )
    .unwrap();
    let g = cmd_reference(&cfg, dir.path()).unwrap();
    assert_eq!(g.times.len(), 4);
    let rows = lines(&dir.path().join("reference.csv"));
    assert_eq!(rows[0], "x,y,t,c_A,c_S");
    assert_eq!(rows.len(), 1 + 4 * 16 * 16);
}

#[test]
fn unwritable_output_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = blocker.join("out");
    assert!(matches!(cmd_reference(&small(""), &out), Err(Error::Io { .. })));
    assert!(matches!(cmd_train(&small(""), &out), Err(Error::Io { .. })));
}

#[test]
fn pinn_replicates_get_distinct_dirs_and_no_circuits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(
        r#"
replicates = 3
[model]
variant = "pinn"
"#,
    );
    let runs = cmd_train(&cfg, dir.path()).unwrap();
    assert_eq!(runs.len(), 3);
    let mut ids: Vec<_> = runs.iter().map(|r| r.run_id.clone()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 3);
    for r in &runs {
        let rows = lines(&r.dir.join("history.csv"));
        assert_eq!(rows.len(), 1 + 2);
        for row in &rows[1..] {
            assert!(row.ends_with(",0"), "{row}");
        }
        assert!(r.dir.join("checkpoint.json").exists());
        assert!(r.dir.join("config.toml").exists());
    }
}

#[test]
fn one_epoch_run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = epochs(1);
    let runs = cmd_train(&cfg, dir.path()).unwrap();
    assert_eq!(lines(&runs[0].dir.join("history.csv")).len(), 2);
    assert_eq!(runs[0].run_id, run_id(&cfg, 0));
}

#[test]
fn infer_reproduces_the_best_epoch_mse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = epochs(3);
    let run = cmd_train(&cfg, &dir.path().join("train")).unwrap().remove(0);
    let ck = run.dir.join("checkpoint.json");
    let inf = cmd_infer(&ck, None, 1, true, &dir.path().join("infer")).unwrap();
    let rep = inf.report.unwrap();
    let (ckpt, _) = load_checkpoint(&ck, None).unwrap();
    let best = ckpt
        .state
        .history
        .iter()
        .find(|r| r.epoch == ckpt.state.best_epoch)
        .unwrap();
    let mse = best.mse.unwrap();
    assert!((rep.activator.mse - mse[0]).abs() <= 1e-12 * mse[0].max(1.0));
    assert!((rep.substrate.mse - mse[1]).abs() <= 1e-12 * mse[1].max(1.0));
    let errors = lines(&dir.path().join("infer/errors.csv"));
    assert_eq!(errors.len(), 1 + 6);

    // a prediction compared with itself
    let zero = compare(&inf.prediction, &inf.prediction).unwrap();
    assert_eq!(zero.activator.mse, 0.0);
    assert_eq!(zero.substrate.rel_l2, Some(0.0));
}

#[test]
fn infer_rejects_an_incompatible_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    let run = cmd_train(&cfg, &dir.path().join("train")).unwrap().remove(0);
    let other = small("[model]\nn_qubits = 4\n");
    let err = cmd_infer(&run.dir.join("checkpoint.json"), Some(&other), 1, true, &dir.path().join("i"))
        .unwrap_err()
        .to_string();
    assert!(err.contains('2') && err.contains('4'), "{err}");
}

#[test]
fn deterministic_runs_match_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small("");
    train_run(&cfg, 5, None, a.path()).unwrap();
    train_run(&cfg, 5, None, b.path()).unwrap();
    for f in ["history.csv", "checkpoint.json", "config.toml"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn qubit_sweep_gives_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = epochs(1);
    let rows = cmd_sweep(&cfg, SweepAxis::Qubits, &[2, 4], dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.failure.is_none()), "{rows:?}");
    let csv = lines(&dir.path().join("sweep_qubits.csv"));
    assert_eq!(csv[0], SWEEP_COLUMNS.join(","));
    assert_eq!(csv.len(), 3);
}

#[test]
fn sweep_rejects_out_of_range_values_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    assert!(matches!(
        cmd_sweep(&cfg, SweepAxis::Qubits, &[2, 9], dir.path()),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        cmd_sweep(&cfg, SweepAxis::Layers, &[4], dir.path()),
        Err(Error::Config(_))
    ));
    assert!(!dir.path().join("sweep_qubits.csv").exists());
}

#[test]
fn failed_sweep_run_becomes_a_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = epochs(1);
    // a plain file where the second run directory would go
    let first = cmd_sweep(&cfg, SweepAxis::Qubits, &[2], dir.path()).unwrap();
    let blocked = first[0].run_id.replace("q2", "q4").replace("qubits2", "qubits4");
    fs::write(dir.path().join(&blocked), b"x").unwrap();
    let rows = cmd_sweep(&cfg, SweepAxis::Qubits, &[2, 4], dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].failure.is_none());
    assert!(rows[1].failure.is_some(), "{:?}", rows[1]);
    assert!(lines(&dir.path().join("sweep_qubits.csv"))[2].contains(",failed: "));
}

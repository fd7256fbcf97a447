//! Run front end: reference solves, training, inference and sweeps, all
//! writing plain CSV plus a config echo into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{check_ranges, RunConfig};
use crate::error::{config_err, Error, Result};
use crate::metrics::{compare, ErrorReport};
use crate::model::{Model, Variant};
use crate::reference::{solve_reference, GridSolution};
use crate::train::{Checkpoint, HistoryRecord, TrainState, Trainer, HISTORY_COLUMNS};

/// Float format for every CSV: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Creates `dir` and proves it writable before any expensive work.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

pub fn grid_header(dim: usize) -> Vec<&'static str> {
    let mut h = vec!["x", "y"];
    h.truncate(dim);
    h.extend(["t", "c_A", "c_S"]);
    h
}

/// Writes snapshot blocks in time order, nodes with the last axis fastest.
pub fn write_grid_csv(path: &Path, g: &GridSolution) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(grid_header(g.spatial_dim()))?;
    for (s, &t) in g.times.iter().enumerate() {
        for k in 0..g.n_nodes() {
            let mut row: Vec<String> = g.node(k).into_iter().map(fmt_f64).collect();
            row.push(fmt_f64(t));
            row.push(fmt_f64(g.c_a[s][k]));
            row.push(fmt_f64(g.c_s[s][k]));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn history_csv(records: &[HistoryRecord]) -> String {
    let mut out = HISTORY_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let l = &r.loss;
        let mse = r.mse.map_or([None, None], |m| [Some(m[0]), Some(m[1])]);
        let row = [
            r.epoch.to_string(),
            fmt_f64(l.total),
            fmt_f64(l.l_pde),
            fmt_f64(l.l_a),
            fmt_f64(l.l_s),
            fmt_f64(l.l_bc_total()),
            fmt_f64(l.l_ic),
            fmt_opt(mse[0]),
            fmt_opt(mse[1]),
            fmt_f64(r.wall_ms),
            r.circuit_evals.to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub const ERROR_COLUMNS: [&str; 4] = ["variant", "metric", "species", "value"];

/// One row per (variant, metric, species).
pub fn write_error_csv(path: &Path, rows: &[(Variant, &ErrorReport)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(ERROR_COLUMNS)?;
    for (variant, rep) in rows {
        for (i, sp) in ["A", "S"].iter().enumerate() {
            let e = rep.species(i);
            for (metric, v) in [("mse", Some(e.mse)), ("rel_l2", e.rel_l2), ("rel_linf", e.rel_linf)] {
                w.write_record([variant.name(), metric, sp, &fmt_opt(v)])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct GridMeta<'a> {
    dimension: usize,
    nodes_per_axis: Vec<usize>,
    times: &'a [f64],
    #[serde(flatten)]
    meta: Option<&'a crate::reference::ReferenceMeta>,
}

fn write_grid_meta(path: &Path, g: &GridSolution) -> Result<()> {
    let m = GridMeta {
        dimension: g.spatial_dim(),
        nodes_per_axis: g.axes.iter().map(Vec::len).collect(),
        times: &g.times,
        meta: g.meta.as_ref(),
    };
    write_file(path, serde_json::to_string_pretty(&m)?.as_bytes())
}

fn write_config_echo(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())
}

pub fn reference_for(cfg: &RunConfig) -> Result<GridSolution> {
    let p = &cfg.problem;
    solve_reference(&p.domain, &cfg.reference, &p.beta, &p.ic)
}

/// Solves the reference problem into `out/reference.csv` with a
/// `reference.meta.json` sidecar.
pub fn cmd_reference(cfg: &RunConfig, out: &Path) -> Result<GridSolution> {
    prepare_dir(out)?;
    let g = reference_for(cfg)?;
    write_config_echo(out, cfg)?;
    write_grid_csv(&out.join("reference.csv"), &g)?;
    write_grid_meta(&out.join("reference.meta.json"), &g)?;
    Ok(g)
}

/// Directory-safe identifier of one training run.
pub fn run_id(cfg: &RunConfig, seed: u64) -> String {
    let m = &cfg.model;
    match m.variant {
        Variant::Pinn => format!("pinn-e{}-s{seed}", cfg.training.epochs),
        v => format!("{}-q{}-l{}-e{}-s{seed}", v.name(), m.n_qubits, m.n_layers, cfg.training.epochs),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub dir: PathBuf,
    pub seed: u64,
    pub history: Vec<HistoryRecord>,
    pub best_model: Model,
    pub best_loss: f64,
    /// Set when training aborted; the partial history is still written.
    pub error: Option<String>,
}

/// Trains one run in `dir`, writing the history even when training aborts.
pub fn train_run(cfg: &RunConfig, seed: u64, reference: Option<&GridSolution>, dir: &Path) -> Result<RunOutcome> {
    prepare_dir(dir)?;
    let mut run_cfg = cfg.clone();
    run_cfg.seed = seed;
    run_cfg.replicates = 1;
    write_config_echo(dir, &run_cfg)?;
    let problem = cfg.problem.build()?;
    let model = cfg.model.build(&problem.domain, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut trainer = Trainer::new(model, cfg.training.clone(), &problem, reference, seed)?;
    let res = trainer.run();
    let state = &trainer.state;
    write_file(&dir.join("history.csv"), history_csv(&state.history).as_bytes())?;
    if cfg.output.checkpoint {
        let echo = serde_json::to_value(&run_cfg)?;
        Checkpoint::new(echo, state.clone()).save(&dir.join("checkpoint.json"))?;
    }
    let best = state.best_model();
    if res.is_ok() && cfg.output.predictions {
        if let Some(r) = reference {
            let pred = r.evaluate(|p| best.predict(p))?;
            write_grid_csv(&dir.join("prediction.csv"), &pred)?;
        }
    }
    Ok(RunOutcome {
        run_id: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        dir: dir.to_path_buf(),
        seed,
        history: state.history.clone(),
        best_model: best,
        best_loss: state.best_loss,
        error: res.err().map(|e| e.to_string()),
    })
}

/// Trains `cfg.replicates` runs with consecutive seeds, each into
/// `out/<run id>/`. Fails with the first aborted run's error after its
/// partial history has been written.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Vec<RunOutcome>> {
    prepare_dir(out)?;
    let reference = reference_for(cfg)?;
    let mut runs = Vec::new();
    for r in 0..cfg.replicates as u64 {
        let seed = cfg.seed + r;
        let dir = out.join(run_id(cfg, seed));
        let o = train_run(cfg, seed, Some(&reference), &dir)?;
        if let Some(message) = o.error {
            return Err(Error::RunAborted { run_id: o.run_id, message });
        }
        runs.push(o);
    }
    Ok(runs)
}

/// Loads a checkpoint and checks it against `cfg` when given.
pub fn load_checkpoint(path: &Path, cfg: Option<&RunConfig>) -> Result<(Checkpoint, RunConfig)> {
    let ck = Checkpoint::load(path)?;
    let stored: RunConfig = serde_json::from_value(ck.config.clone())
        .map_err(|e| Error::Checkpoint(format!("config echo unreadable: {e}")))?;
    let cfg = match cfg {
        Some(c) => {
            ck.check_model(&c.model)?;
            c.clone()
        }
        None => stored,
    };
    Ok((ck, cfg))
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub prediction: GridSolution,
    pub report: Option<ErrorReport>,
}

/// Evaluates the checkpoint's best parameters on the configured reference
/// grid, every `stride`-th node, and compares when `with_reference`.
pub fn cmd_infer(
    checkpoint: &Path,
    cfg: Option<&RunConfig>,
    stride: usize,
    with_reference: bool,
    out: &Path,
) -> Result<InferOutcome> {
    prepare_dir(out)?;
    let (ck, cfg) = load_checkpoint(checkpoint, cfg)?;
    let model = ck.state.best_model();
    let reference = reference_for(&cfg)?.downsample(stride)?;
    let prediction = reference.evaluate(|p| model.predict(p))?;
    write_grid_csv(&out.join("prediction.csv"), &prediction)?;
    let report = if with_reference {
        let rep = compare(&prediction, &reference)?;
        write_error_csv(&out.join("errors.csv"), &[(model.variant(), &rep)])?;
        Some(rep)
    } else {
        None
    };
    Ok(InferOutcome { prediction, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Qubits,
    Layers,
    Epochs,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qubits" => Ok(SweepAxis::Qubits),
            "layers" => Ok(SweepAxis::Layers),
            "epochs" => Ok(SweepAxis::Epochs),
            other => config_err(format!("unknown sweep axis {other:?}; expected qubits, layers or epochs")),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Qubits => "qubits",
            SweepAxis::Layers => "layers",
            SweepAxis::Epochs => "epochs",
        }
    }

    fn apply(self, cfg: &mut RunConfig, v: usize) {
        match self {
            SweepAxis::Qubits => {
                cfg.model.n_qubits = v;
                cfg.model.partition = None;
            }
            SweepAxis::Layers => {
                cfg.model.n_layers = v;
                cfg.model.qnn_layers = None;
            }
            SweepAxis::Epochs => cfg.training.epochs = v,
        }
    }
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "axis",
    "value",
    "variant",
    "seed",
    "run_id",
    "status",
    "epochs_run",
    "final_total",
    "best_total",
    "mse_A",
    "mse_S",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub variant: Variant,
    pub seed: u64,
    pub run_id: String,
    /// `None` on success, otherwise the failure message.
    pub failure: Option<String>,
    pub epochs_run: usize,
    pub final_total: Option<f64>,
    pub best_total: Option<f64>,
    pub mse: Option<[f64; 2]>,
}

/// Trains every variant in `cfg.sweep.variants` at each value of `axis`.
/// A failing run becomes a `failed` row and the sweep moves on.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[usize], out: &Path) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return config_err("sweep needs at least one value");
    }
    let mut plans = Vec::new();
    for &v in values {
        for &variant in &cfg.sweep.variants {
            let mut c = cfg.clone();
            c.model.variant = variant;
            axis.apply(&mut c, v);
            if axis != SweepAxis::Epochs {
                check_ranges(&c.model)?;
            } else if v == 0 {
                return config_err("epochs must be at least 1");
            }
            plans.push((v, c));
        }
    }
    prepare_dir(out)?;
    let reference = reference_for(cfg)?;
    let mut rows = Vec::new();
    for (v, mut c) in plans {
        let variant = c.model.variant;
        c = match RunConfig::from_toml(&c.to_toml()?) {
            Ok(c) => c,
            Err(e) => {
                rows.push(SweepRow {
                    value: v,
                    variant,
                    seed: c.seed,
                    run_id: format!("{}-{}{v}", run_id(&c, c.seed), axis.name()),
                    failure: Some(e.to_string()),
                    epochs_run: 0,
                    final_total: None,
                    best_total: None,
                    mse: None,
                });
                continue;
            }
        };
        for r in 0..c.replicates as u64 {
            let seed = c.seed + r;
            let id = format!("{}-{}{v}", run_id(&c, seed), axis.name());
            let row = match train_run(&c, seed, Some(&reference), &out.join(&id)) {
                Ok(o) => {
                    let last = o.history.last();
                    SweepRow {
                        value: v,
                        variant,
                        seed,
                        run_id: id,
                        failure: o.error,
                        epochs_run: o.history.len(),
                        final_total: last.map(|h| h.loss.total),
                        best_total: last.map(|_| o.best_loss),
                        mse: last.and_then(|h| h.mse),
                    }
                }
                Err(e) => SweepRow {
                    value: v,
                    variant,
                    seed,
                    run_id: id,
                    failure: Some(e.to_string()),
                    epochs_run: 0,
                    final_total: None,
                    best_total: None,
                    mse: None,
                },
            };
            rows.push(row);
        }
    }
    write_sweep_csv(&out.join(format!("sweep_{}.csv", axis.name())), axis, &rows)?;
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, axis: SweepAxis, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        let status = match &r.failure {
            None => "ok".to_string(),
            Some(e) => format!("failed: {e}"),
        };
        w.write_record([
            axis.name().to_string(),
            r.value.to_string(),
            r.variant.name().to_string(),
            r.seed.to_string(),
            r.run_id.clone(),
            status,
            r.epochs_run.to_string(),
            fmt_opt(r.final_total),
            fmt_opt(r.best_total),
            fmt_opt(r.mse.map(|m| m[0])),
            fmt_opt(r.mse.map(|m| m[1])),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Continues a checkpointed run for `additional` epochs in place.
pub fn resume_run(dir: &Path, additional: usize) -> Result<RunOutcome> {
    let (ck, cfg) = load_checkpoint(&dir.join("checkpoint.json"), None)?;
    let problem = cfg.problem.build()?;
    let reference = reference_for(&cfg)?;
    let state: TrainState = ck.state;
    let target = state.epoch + additional;
    let mut trainer = Trainer::resume(state, cfg.training.clone(), &problem, Some(&reference))?;
    let res = trainer.run_until(target);
    let state = &trainer.state;
    write_file(&dir.join("history.csv"), history_csv(&state.history).as_bytes())?;
    Checkpoint::new(ck.config, state.clone()).save(&dir.join("checkpoint.json"))?;
    Ok(RunOutcome {
        run_id: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        dir: dir.to_path_buf(),
        seed: cfg.seed,
        history: state.history.clone(),
        best_model: state.best_model(),
        best_loss: state.best_loss,
        error: res.err().map(|e| e.to_string()),
    })
}

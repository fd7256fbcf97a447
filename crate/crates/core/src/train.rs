//! Full-batch training loop with history, best-snapshot tracking and
//! resumable checkpoints.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::FieldModel;
use crate::error::{config_err, Error, Result};
use crate::metrics::compare;
use crate::model::Model;
use crate::optim::{Adam, AdamConfig, Evaluation, Lbfgs, LbfgsConfig};
use crate::physics::{evaluate, LossBreakdown, LossEval, Problem};
use crate::reference::GridSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    /// Stop once the total loss drops below this.
    pub tolerance: f64,
    /// Store per-epoch wall time; off gives byte-identical histories.
    pub record_wall_time: bool,
    /// Node stride when comparing against the reference each epoch.
    pub metrics_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            optimizer: OptimizerKind::Lbfgs,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
            tolerance: 1e-9,
            record_wall_time: true,
            metrics_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return config_err("epochs must be at least 1");
        }
        if self.metrics_stride == 0 {
            return config_err("metrics_stride must be positive");
        }
        if !(self.adam.lr > 0.0) {
            return config_err("Adam learning rate must be positive");
        }
        self.lbfgs.validate()
    }
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub mse: Option<[f64; 2]>,
    pub wall_ms: f64,
    pub circuit_evals: u64,
}

pub const HISTORY_COLUMNS: [&str; 11] = [
    "epoch",
    "total",
    "l_pde",
    "l_A",
    "l_S",
    "l_bc",
    "l_ic",
    "mse_A",
    "mse_S",
    "wall_ms",
    "circuit_evals",
];

/// Optimizer memory, serializable for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerState {
    Adam(Adam),
    Lbfgs(Lbfgs),
}

/// Loss and gradient at the current parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEval {
    pub loss: LossBreakdown,
    pub grad: Vec<f64>,
}

/// Everything needed to continue a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub model: Model,
    pub best_params: Vec<f64>,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub optimizer: OptimizerState,
    pub current: Option<CachedEval>,
    /// Circuit executions not yet attributed to an epoch.
    pub pending_evals: u64,
    pub rng: ChaCha8Rng,
    pub history: Vec<HistoryRecord>,
    pub events: Vec<String>,
}

impl TrainState {
    pub fn new(model: Model, cfg: &TrainConfig, seed: u64) -> Self {
        let n = model.n_params();
        let optimizer = match cfg.optimizer {
            OptimizerKind::Adam => OptimizerState::Adam(Adam::new(cfg.adam, n)),
            OptimizerKind::Lbfgs => OptimizerState::Lbfgs(Lbfgs::new(cfg.lbfgs)),
        };
        Self {
            epoch: 0,
            best_params: model.params(),
            best_loss: f64::INFINITY,
            best_epoch: 0,
            model,
            optimizer,
            current: None,
            pending_evals: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: Vec::new(),
            events: Vec::new(),
        }
    }

    /// The model carrying the best parameters seen so far.
    pub fn best_model(&self) -> Model {
        let mut m = self.model.clone();
        m.set_params(&self.best_params);
        m
    }
}

fn non_finite_component(l: &LossBreakdown) -> Option<String> {
    let named = [
        ("l_pde", l.l_pde),
        ("l_ic", l.l_ic),
        ("l_A", l.l_a),
        ("l_S", l.l_s),
        ("total", l.total),
    ];
    if let Some((k, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
        return Some((*k).to_string());
    }
    l.l_bc.iter().position(|v| !v.is_finite()).map(|k| format!("l_bc[{k}]"))
}

/// Drives [`TrainState`] through epochs of one optimizer.
pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub problem: &'a Problem,
    reference: Option<GridSolution>,
    pub state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, cfg: TrainConfig, problem: &'a Problem, reference: Option<&GridSolution>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        problem.validate()?;
        let state = TrainState::new(model, &cfg, seed);
        Self::resume(state, cfg, problem, reference)
    }

    pub fn resume(state: TrainState, cfg: TrainConfig, problem: &'a Problem, reference: Option<&GridSolution>) -> Result<Self> {
        let reference = reference.map(|r| r.downsample(cfg.metrics_stride)).transpose()?;
        Ok(Self {
            cfg,
            problem,
            reference,
            state,
        })
    }

    fn evaluate_at(&self, params: &[f64]) -> Result<Evaluation<LossEval>> {
        let mut m = self.state.model.clone();
        m.set_params(params);
        let e = evaluate(&m, self.problem, true)?;
        Ok(Evaluation {
            value: e.breakdown.total,
            grad: e.grad.clone().expect("gradient requested"),
            payload: e,
        })
    }

    /// Per-species MSE of `model` against the (strided) reference.
    pub fn reference_mse(&self, model: &Model) -> Result<Option<[f64; 2]>> {
        let Some(r) = &self.reference else { return Ok(None) };
        let pred = r.evaluate(|p| model.predict(p))?;
        let rep = compare(&pred, r)?;
        Ok(Some([rep.activator.mse, rep.substrate.mse]))
    }

    fn ensure_current(&mut self) -> Result<()> {
        if self.state.current.is_none() {
            let e = self.evaluate_at(&self.state.model.params())?;
            if let Some(c) = non_finite_component(&e.payload.breakdown) {
                return Err(Error::NonFinite {
                    epoch: self.state.epoch,
                    component: c,
                });
            }
            self.state.pending_evals += e.payload.circuit_evals;
            self.state.current = Some(CachedEval {
                loss: e.payload.breakdown,
                grad: e.grad,
            });
        }
        Ok(())
    }

    /// Runs until `cfg.epochs` epochs have completed in total or the loss
    /// falls below the tolerance. Completed epochs stay in the history when
    /// an error aborts the run.
    pub fn run(&mut self) -> Result<()> {
        let target = self.cfg.epochs;
        self.run_until(target)
    }

    pub fn run_until(&mut self, total_epochs: usize) -> Result<()> {
        if self.state.epoch >= total_epochs || self.converged() {
            return Ok(());
        }
        self.ensure_current()?;
        while self.state.epoch < total_epochs && !self.converged() {
            self.epoch()?;
        }
        Ok(())
    }

    fn converged(&self) -> bool {
        self.state.history.last().is_some_and(|r| r.loss.total < self.cfg.tolerance)
    }

    fn epoch(&mut self) -> Result<()> {
        let start = Instant::now();
        let epoch = self.state.epoch + 1;
        let cur = self.state.current.clone().expect("evaluated");
        let mut x = self.state.model.params();
        let mut evals = std::mem::take(&mut self.state.pending_evals);
        let mut spent = 0u64;
        let mut event = None;
        let mut optimizer = self.state.optimizer.clone();

        let new = match &mut optimizer {
            OptimizerState::Adam(adam) => {
                adam.update(&mut x, &cur.grad);
                let e = self.evaluate_at(&x)?;
                spent += e.payload.circuit_evals;
                e
            }
            OptimizerState::Lbfgs(lbfgs) => {
                let mut current = Evaluation {
                    value: cur.loss.total,
                    grad: cur.grad.clone(),
                    payload: None,
                };
                let mut objective = |p: &[f64]| -> Result<Evaluation<Option<LossEval>>> {
                    let e = self.evaluate_at(p)?;
                    spent += e.payload.circuit_evals;
                    Ok(Evaluation {
                        value: e.value,
                        grad: e.grad,
                        payload: Some(e.payload),
                    })
                };
                let info = lbfgs.iterate(&mut x, &mut current, &mut objective)?;
                if info.fallback {
                    event = Some(format!("epoch {epoch}: line search failed, took a gradient step"));
                }
                match current.payload {
                    Some(p) => Evaluation {
                        value: current.value,
                        grad: current.grad,
                        payload: p,
                    },
                    // zero gradient: stay put
                    None => Evaluation {
                        value: cur.loss.total,
                        grad: cur.grad.clone(),
                        payload: LossEval {
                            breakdown: cur.loss.clone(),
                            grad: None,
                            circuit_evals: 0,
                        },
                    },
                }
            }
        };
        evals += spent;
        let loss = new.payload.breakdown.clone();
        if let Some(c) = non_finite_component(&loss) {
            return Err(Error::NonFinite { epoch, component: c });
        }

        self.state.model.set_params(&x);
        self.state.optimizer = optimizer;
        self.state.current = Some(CachedEval {
            loss: loss.clone(),
            grad: new.grad,
        });
        if let Some(e) = event {
            self.state.events.push(e);
        }
        let mse = self.reference_mse(&self.state.model)?;
        if loss.total < self.state.best_loss {
            self.state.best_loss = loss.total;
            self.state.best_params = x;
            self.state.best_epoch = epoch;
        }
        self.state.epoch = epoch;
        let wall_ms = if self.cfg.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.state.history.push(HistoryRecord {
            epoch,
            loss,
            mse,
            wall_ms,
            circuit_evals: evals,
        });
        Ok(())
    }
}

/// Trains `model` and returns the best-loss snapshot with the history.
pub fn train(
    model: Model,
    cfg: &TrainConfig,
    problem: &Problem,
    reference: Option<&GridSolution>,
    seed: u64,
) -> Result<(Model, Vec<HistoryRecord>)> {
    let mut t = Trainer::new(model, cfg.clone(), problem, reference, seed)?;
    t.run()?;
    Ok((t.state.best_model(), t.state.history))
}

pub const CHECKPOINT_FORMAT: &str = "qpinn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Structured-text checkpoint: JSON with exact float round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Resolved run configuration that produced this state.
    pub config: serde_json::Value,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(config: serde_json::Value, state: TrainState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let format = v.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {format:?})")));
        }
        let version = v.get("version").and_then(|f| f.as_u64()).unwrap_or(0);
        if version != CHECKPOINT_VERSION as u64 {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}"
            )));
        }
        let c: Checkpoint = serde_json::from_value(v)?;
        c.state.model.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Errors unless the stored model has the architecture `expected`
    /// describes.
    pub fn check_model(&self, expected: &crate::model::ModelConfig) -> Result<()> {
        let m = &self.state.model;
        if m.variant() != expected.variant {
            return Err(Error::Checkpoint(format!(
                "checkpoint variant {} does not match configured variant {}",
                m.variant().name(),
                expected.variant.name()
            )));
        }
        if let Model::Quantum(spec) = m {
            if spec.n_qubits() != expected.n_qubits {
                return Err(Error::Checkpoint(format!(
                    "checkpoint has n_qubits = {}, configuration has n_qubits = {}",
                    spec.n_qubits(),
                    expected.n_qubits
                )));
            }
            if spec.ansatz.n_layers != expected.n_layers {
                return Err(Error::Checkpoint(format!(
                    "checkpoint has n_layers = {}, configuration has n_layers = {}",
                    spec.ansatz.n_layers, expected.n_layers
                )));
            }
        }
        Ok(())
    }
}

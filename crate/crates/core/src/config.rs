//! Declarative run configuration (TOML).
//!
//! The file form leaves most things optional; [`RunConfig::from_toml`]
//! fills every default and the resolved struct serializes back to a file
//! that states each value explicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::statevector::ObservablePartition;
use crate::physics::{
    sample_collocation, CollocationConfig, Domain, InitialCondition, LossWeights, Problem, RDParams, Reduction,
};
use crate::reference::ReferenceConfig;
use crate::train::TrainConfig;

pub const WIRES_RANGE: (usize, usize) = (2, 8);
pub const LAYERS_RANGE: (usize, usize) = (5, 20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Spatial dimension, 1 or 2.
    pub dimension: usize,
    pub domain: Domain,
    pub beta: RDParams,
    pub ic: InitialCondition,
    pub collocation: CollocationConfig,
    /// Seed for Latin-hypercube collocation; unused on grids.
    pub collocation_seed: u64,
    pub weights: LossWeights,
    pub reduction: Reduction,
    pub match_derivative: bool,
}

impl ProblemConfig {
    pub fn default_for(dimension: usize) -> Result<Self> {
        let (domain, ic) = match dimension {
            1 => (Domain::interval_1d(), InitialCondition::double_bump()),
            2 => (Domain::square_2d(), InitialCondition::gaussian_2d()),
            d => return config_err(format!("dimension must be 1 or 2, got {d}")),
        };
        Ok(Self {
            dimension,
            domain,
            beta: RDParams::default(),
            ic,
            collocation: CollocationConfig::default_for(dimension),
            collocation_seed: 0,
            weights: LossWeights::default(),
            reduction: Reduction::Sum,
            match_derivative: false,
        })
    }

    pub fn build(&self) -> Result<Problem> {
        if self.domain.spatial_dim() != self.dimension {
            return config_err(format!(
                "dimension = {} but the domain has {} spatial axes",
                self.dimension,
                self.domain.spatial_dim()
            ));
        }
        let colloc = sample_collocation(&self.domain, &self.collocation, self.collocation_seed)?;
        let mut p = Problem::new(self.domain.clone(), self.beta, self.ic.clone(), colloc)?;
        p.weights = self.weights.clone();
        p.reduction = self.reduction;
        p.match_derivative = self.match_derivative;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub checkpoint: bool,
    /// Also dump model predictions on the reference grid after training.
    pub predictions: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            checkpoint: true,
            predictions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Variants trained at every sweep value.
    pub variants: Vec<Variant>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    pub replicates: usize,
    pub problem: ProblemConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub reference: ReferenceConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
}

/// Overlays `user` onto `base`. Tagged tables (an enum with `kind`) are
/// replaced whole so a different variant does not inherit stale fields.
fn merge(base: &mut toml::Value, user: toml::Value) {
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) if !u.contains_key("kind") => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, u) => *slot = u,
    }
}

impl RunConfig {
    /// Defaults for a spatial dimension.
    pub fn default_for(dimension: usize) -> Result<Self> {
        Ok(Self::unresolved_defaults(dimension)?.resolved())
    }

    fn unresolved_defaults(dimension: usize) -> Result<Self> {
        let model = ModelConfig::default();
        Ok(Self {
            seed: 0,
            replicates: 1,
            problem: ProblemConfig::default_for(dimension)?,
            sweep: SweepConfig {
                variants: vec![model.variant],
            },
            model,
            training: TrainConfig::default(),
            reference: ReferenceConfig::default_for(dimension),
            output: OutputConfig::default(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let problem = user.get("problem");
        let dimension = match problem.and_then(|p| p.get("dimension")) {
            Some(d) => d
                .as_integer()
                .ok_or_else(|| Error::Config("problem.dimension must be an integer".into()))?
                as usize,
            None => problem
                .and_then(|p| p.get("domain"))
                .and_then(|d| d.get("space"))
                .and_then(|s| s.as_array())
                .map_or(1, |a| a.len()),
        };
        let explicit_sweep = user.get("sweep").is_some();
        let mut doc = toml::Value::try_from(Self::unresolved_defaults(dimension)?).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut doc, user);
        let mut cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if !explicit_sweep {
            cfg.sweep.variants = vec![cfg.model.variant];
        }
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Spells out values the model would otherwise derive.
    fn resolved(mut self) -> Self {
        let m = &mut self.model;
        if m.variant != Variant::Pinn {
            m.qnn_layers = Some(m.qnn_layers());
            if m.partition.is_none() {
                m.partition = ObservablePartition::split_halves(m.n_qubits).ok();
            }
        }
        self
    }

    /// Checks the whole document, including the experiment hyperparameter
    /// ranges for quantum models.
    pub fn validate(&self) -> Result<()> {
        self.problem.build()?;
        self.model.validate()?;
        check_ranges(&self.model)?;
        self.training.validate()?;
        if self.replicates == 0 {
            return config_err("replicates must be at least 1");
        }
        if self.sweep.variants.is_empty() {
            return config_err("sweep.variants must be nonempty");
        }
        let r = &self.reference;
        if r.grid.len() != self.problem.dimension {
            return config_err(format!(
                "reference grid has {} axes for a {}D problem",
                r.grid.len(),
                self.problem.dimension
            ));
        }
        Ok(())
    }
}

/// Qubit and layer counts must stay inside the experiment table's ranges.
pub fn check_ranges(m: &ModelConfig) -> Result<()> {
    if m.variant == Variant::Pinn {
        return Ok(());
    }
    let (lo, hi) = WIRES_RANGE;
    if !(lo..=hi).contains(&m.n_qubits) {
        return config_err(format!("n_qubits = {} outside {lo}..={hi}", m.n_qubits));
    }
    let (lo, hi) = LAYERS_RANGE;
    if !(lo..=hi).contains(&m.n_layers) {
        return config_err(format!("n_layers = {} outside {lo}..={hi}", m.n_layers));
    }
    Ok(())
}

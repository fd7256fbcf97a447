//! Reaction–diffusion residuals, collocation sets and the physics-informed
//! loss.
//!
//! ```text
//! R_A = ∂t c_A − D_A ∇²c_A − κ1 c_A² c_S + κ2 c_A − q_A
//! R_S = ∂t c_S − D_S ∇²c_S + κ1 c_A² c_S − κ3     − q_S
//! ```

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{FieldCotangent, FieldJet, FieldModel, Order};
use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RDParams {
    pub d_a: f64,
    pub d_s: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

impl Default for RDParams {
    fn default() -> Self {
        Self {
            d_a: 1e-5,
            d_s: 2e-3,
            kappa1: 1.0,
            kappa2: 1.0,
            kappa3: 1e-3,
        }
    }
}

impl RDParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.d_a, self.d_s, self.kappa1, self.kappa2, self.kappa3];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return config_err(format!("reaction-diffusion parameters must be finite and nonnegative: {self:?}"));
        }
        Ok(())
    }

    pub fn diffusivity(&self) -> [f64; 2] {
        [self.d_a, self.d_s]
    }

    /// Homogeneous steady state `(κ3/κ2, κ2²/(κ1 κ3))`.
    pub fn steady_state(&self) -> [f64; 2] {
        [
            self.kappa3 / self.kappa2,
            self.kappa2 * self.kappa2 / (self.kappa1 * self.kappa3),
        ]
    }

    /// Reaction terms `(−κ1 c_A² c_S + κ2 c_A, κ1 c_A² c_S − κ3)` as they
    /// appear in the residuals.
    pub fn reaction(&self, c: [f64; 2]) -> [f64; 2] {
        let auto = self.kappa1 * c[0] * c[0] * c[1];
        [-auto + self.kappa2 * c[0], auto - self.kappa3]
    }
}

/// Values and the input derivatives entering the residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointFields {
    pub c: [f64; 2],
    pub dt: [f64; 2],
    pub laplacian: [f64; 2],
}

impl From<&FieldJet> for PointFields {
    fn from(j: &FieldJet) -> Self {
        Self {
            c: j.value,
            dt: j.dt(),
            laplacian: j.laplacian(),
        }
    }
}

pub fn residuals(f: &PointFields, beta: &RDParams, q: [f64; 2]) -> [f64; 2] {
    let r = beta.reaction(f.c);
    let d = beta.diffusivity();
    [
        f.dt[0] - d[0] * f.laplacian[0] + r[0] - q[0],
        f.dt[1] - d[1] * f.laplacian[1] + r[1] - q[1],
    ]
}

/// Partials of both residuals with respect to every channel they depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPartials {
    /// `reaction[i][k] = ∂R_i/∂c_k` from the reaction terms.
    pub reaction: [[f64; 2]; 2],
    /// `∂R_i/∂(∂t c_i)`
    pub dt: [f64; 2],
    /// `∂R_i/∂(∇² c_i)`
    pub laplacian: [f64; 2],
}

pub fn residual_sensitivities(c: [f64; 2], beta: &RDParams) -> ResidualPartials {
    let k1 = beta.kappa1;
    let (a, s) = (c[0], c[1]);
    ResidualPartials {
        reaction: [
            [-2.0 * k1 * a * s + beta.kappa2, -k1 * a * a],
            [2.0 * k1 * a * s, k1 * a * a],
        ],
        dt: [1.0, 1.0],
        laplacian: [-beta.d_a, -beta.d_s],
    }
}

/// `G_i = R_A ∂R_A/∂c_i + R_S ∂R_S/∂c_i` over the reaction channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSensitivities {
    pub g_a: f64,
    pub g_s: f64,
}

impl ResidualSensitivities {
    pub fn new(r: [f64; 2], p: &ResidualPartials) -> Self {
        Self {
            g_a: r[0] * p.reaction[0][0] + r[1] * p.reaction[1][0],
            g_s: r[0] * p.reaction[0][1] + r[1] * p.reaction[1][1],
        }
    }
}

type FieldFn = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `c_A = baseline + Σ amplitude·exp(−(x−c)²/(2 width²))`, `c_S` constant.
    #[serde(rename = "double_bump_1d")]
    DoubleBump1D {
        baseline: f64,
        centers: [f64; 2],
        width: f64,
        amplitude: f64,
        substrate: f64,
    },
    /// Radial Gaussian over a baseline for `c_A`, constant `c_S`.
    #[serde(rename = "gaussian_2d")]
    Gaussian2D {
        baseline: f64,
        center: [f64; 2],
        width: f64,
        amplitude: f64,
        substrate: f64,
    },
    /// `(κ3/κ2, κ2²/(κ1 κ3))` everywhere.
    HomogeneousSteadyState,
    /// Constant fields.
    Uniform { c_a: f64, c_s: f64 },
    #[serde(skip)]
    Custom(FieldFn),
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Custom(_) => f.write_str("Custom(..)"),
            other => f.write_str(&serde_json::to_string(other).unwrap_or_default()),
        }
    }
}

impl PartialEq for InitialCondition {
    fn eq(&self, other: &Self) -> bool {
        use InitialCondition::*;
        match (self, other) {
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            (Custom(_), _) | (_, Custom(_)) => false,
            (a, b) => serde_json::to_value(a).ok() == serde_json::to_value(b).ok(),
        }
    }
}

impl InitialCondition {
    pub fn double_bump() -> Self {
        InitialCondition::DoubleBump1D {
            baseline: 0.1,
            centers: [-0.4, 0.4],
            width: 0.15,
            amplitude: 0.5,
            substrate: 1.0,
        }
    }

    pub fn gaussian_2d() -> Self {
        InitialCondition::Gaussian2D {
            baseline: 0.1,
            center: [0.0, 0.0],
            width: 0.25,
            amplitude: 0.5,
            substrate: 1.0,
        }
    }

    pub fn custom(f: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        InitialCondition::Custom(Arc::new(f))
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::DoubleBump1D { .. } => "double_bump_1d",
            InitialCondition::Gaussian2D { .. } => "gaussian_2d",
            InitialCondition::HomogeneousSteadyState => "homogeneous_steady_state",
            InitialCondition::Uniform { .. } => "uniform",
            InitialCondition::Custom(_) => "custom",
        }
    }

    /// `(c_A, c_S)` at spatial point `x`.
    pub fn eval(&self, x: &[f64], beta: &RDParams) -> [f64; 2] {
        let gauss = |d2: f64, w: f64| (-d2 / (2.0 * w * w)).exp();
        match self {
            InitialCondition::DoubleBump1D {
                baseline,
                centers,
                width,
                amplitude,
                substrate,
            } => {
                let a = baseline
                    + centers
                        .iter()
                        .map(|c| amplitude * gauss((x[0] - c).powi(2), *width))
                        .sum::<f64>();
                [a, *substrate]
            }
            InitialCondition::Gaussian2D {
                baseline,
                center,
                width,
                amplitude,
                substrate,
            } => {
                let d2 = (x[0] - center[0]).powi(2) + x.get(1).map_or(0.0, |y| (y - center[1]).powi(2));
                [baseline + amplitude * gauss(d2, *width), *substrate]
            }
            InitialCondition::HomogeneousSteadyState => beta.steady_state(),
            InitialCondition::Uniform { c_a, c_s } => [*c_a, *c_s],
            InitialCondition::Custom(f) => f(x),
        }
    }
}

/// Source terms `(q_A, q_S)` as a function of the space–time point.
#[derive(Clone, Default)]
pub struct Sources(Option<FieldFn>);

impl fmt::Debug for Sources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_some() { "Sources(custom)" } else { "Sources(zero)" })
    }
}

impl Sources {
    pub fn zero() -> Self {
        Self(None)
    }

    pub fn custom(f: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self(Some(Arc::new(f)))
    }

    /// Sources making `field` an exact solution: `q = R(field)` with zero
    /// sources.
    pub fn manufactured(beta: RDParams, field: impl Fn(&[f64]) -> PointFields + Send + Sync + 'static) -> Self {
        Self::custom(move |p| residuals(&field(p), &beta, [0.0; 2]))
    }

    pub fn at(&self, coords: &[f64]) -> [f64; 2] {
        self.0.as_ref().map_or([0.0; 2], |f| f(coords))
    }
}

/// Axis-aligned box `space × [t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub space: Vec<(f64, f64)>,
    pub time: (f64, f64),
}

impl Domain {
    pub fn interval_1d() -> Self {
        Self {
            space: vec![(-1.0, 1.0)],
            time: (0.0, 1.0),
        }
    }

    pub fn square_2d() -> Self {
        Self {
            space: vec![(-1.0, 1.0), (-1.0, 1.0)],
            time: (0.0, 1.0),
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.space.len()
    }

    /// Coordinate count including time.
    pub fn dim(&self) -> usize {
        self.space.len() + 1
    }

    /// Bounds of every coordinate, time last.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = self.space.clone();
        b.push(self.time);
        b
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.space.len()) {
            return config_err(format!("{} spatial dimensions; 1 or 2 supported", self.space.len()));
        }
        for &(lo, hi) in self.bounds().iter() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return config_err(format!("degenerate domain interval ({lo}, {hi})"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.bounds().iter().zip(p).all(|(&(lo, hi), &v)| v >= lo && v <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Grid,
    LatinHypercube,
}

/// Point counts for [`sample_collocation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationConfig {
    pub mode: SamplingMode,
    /// Per coordinate (space…, time); LHS draws their product.
    pub interior: Vec<usize>,
    /// Times per periodic face pair.
    pub boundary_times: usize,
    /// Tangential spatial samples per face (2D only).
    pub boundary_space: usize,
    /// Per spatial coordinate at `t = t0`.
    pub initial: Vec<usize>,
}

impl CollocationConfig {
    pub fn default_1d() -> Self {
        Self {
            mode: SamplingMode::Grid,
            interior: vec![32, 32],
            boundary_times: 32,
            boundary_space: 1,
            initial: vec![64],
        }
    }

    pub fn default_2d() -> Self {
        Self {
            mode: SamplingMode::Grid,
            interior: vec![16, 16, 8],
            boundary_times: 8,
            boundary_space: 16,
            initial: vec![16, 16],
        }
    }

    pub fn default_for(spatial_dim: usize) -> Self {
        if spatial_dim == 1 {
            Self::default_1d()
        } else {
            Self::default_2d()
        }
    }
}

/// Periodic face pair along `axis`: each `lo` point sits on the lower face
/// and its partner in `hi` at the same tangential coordinates and time.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySegment {
    pub axis: usize,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<Vec<f64>>,
    pub boundary: Vec<BoundarySegment>,
    /// Full coordinates with time at `t0`.
    pub initial: Vec<Vec<f64>>,
}

impl CollocationSet {
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if self.interior.is_empty() {
            return config_err("empty interior collocation set");
        }
        let all = self
            .interior
            .iter()
            .chain(&self.initial)
            .chain(self.boundary.iter().flat_map(|s| s.lo.iter().chain(&s.hi)));
        for p in all {
            if !domain.contains(p) {
                return config_err(format!("collocation point {p:?} outside the domain"));
            }
        }
        for s in &self.boundary {
            if s.lo.len() != s.hi.len() {
                return config_err("unpaired boundary samples");
            }
        }
        Ok(())
    }
}

/// Midpoints of `n` equal cells of `[lo, hi]`.
fn midpoints(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

/// `n` uniform times in `(t0, t1]`.
fn times(n: usize, (t0, t1): (f64, f64)) -> Vec<f64> {
    (1..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
}

/// Periodic grid `lo + i·(hi−lo)/n`, `i < n`.
fn periodic_nodes(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for axis in axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

fn latin_hypercube(n: usize, bounds: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::with_capacity(bounds.len()); n];
    for &(lo, hi) in bounds {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            let u = (s as f64 + rng.gen::<f64>()) / n as f64;
            p.push(lo + (hi - lo) * u);
        }
    }
    pts
}

pub fn sample_collocation(domain: &Domain, cfg: &CollocationConfig, seed: u64) -> Result<CollocationSet> {
    domain.validate()?;
    let d = domain.dim();
    let sd = domain.spatial_dim();
    if cfg.interior.len() != d || cfg.initial.len() != sd {
        return config_err(format!(
            "collocation counts need {d} interior and {sd} initial entries, got {} and {}",
            cfg.interior.len(),
            cfg.initial.len()
        ));
    }
    let zero = cfg.interior.iter().chain(&cfg.initial).any(|&n| n == 0)
        || cfg.boundary_times == 0
        || (sd > 1 && cfg.boundary_space == 0);
    if zero {
        return config_err("collocation counts must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = domain.bounds();

    let interior = match cfg.mode {
        SamplingMode::Grid => {
            let mut axes: Vec<Vec<f64>> = domain.space.iter().zip(&cfg.interior).map(|(&b, &n)| midpoints(n, b)).collect();
            axes.push(times(cfg.interior[sd], domain.time));
            tensor(&axes)
        }
        SamplingMode::LatinHypercube => {
            let n = cfg.interior.iter().product();
            latin_hypercube(n, &bounds, &mut rng)
        }
    };

    let mut boundary = Vec::with_capacity(sd);
    for axis in 0..sd {
        let tangential: Vec<Vec<f64>> = match cfg.mode {
            SamplingMode::Grid => {
                let mut axes: Vec<Vec<f64>> = (0..sd)
                    .filter(|&a| a != axis)
                    .map(|a| midpoints(cfg.boundary_space, domain.space[a]))
                    .collect();
                axes.push(times(cfg.boundary_times, domain.time));
                tensor(&axes)
            }
            SamplingMode::LatinHypercube => {
                let mut b: Vec<(f64, f64)> = (0..sd).filter(|&a| a != axis).map(|a| domain.space[a]).collect();
                b.push(domain.time);
                let n = cfg.boundary_times * if sd > 1 { cfg.boundary_space } else { 1 };
                latin_hypercube(n, &b, &mut rng)
            }
        };
        let place = |v: f64| -> Vec<Vec<f64>> {
            tangential
                .iter()
                .map(|tan| {
                    let mut p = tan.clone();
                    p.insert(axis, v);
                    p
                })
                .collect()
        };
        let (lo, hi) = domain.space[axis];
        boundary.push(BoundarySegment {
            axis,
            lo: place(lo),
            hi: place(hi),
        });
    }

    let axes: Vec<Vec<f64>> = domain.space.iter().zip(&cfg.initial).map(|(&b, &n)| periodic_nodes(n, b)).collect();
    let initial = tensor(&axes)
        .into_iter()
        .map(|mut p| {
            p.push(domain.time.0);
            p
        })
        .collect();

    Ok(CollocationSet {
        interior,
        boundary,
        initial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// One weight per boundary segment; a single entry is broadcast.
    pub boundary: Vec<f64>,
    pub initial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            boundary: vec![1.0],
            initial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn segment(&self, k: usize) -> f64 {
        if self.boundary.len() == 1 {
            self.boundary[0]
        } else {
            self.boundary[k]
        }
    }
}

/// Everything the loss needs besides the model.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: Domain,
    pub beta: RDParams,
    pub ic: InitialCondition,
    pub sources: Sources,
    pub colloc: CollocationSet,
    pub weights: LossWeights,
    pub reduction: Reduction,
    /// Also match the normal derivative across periodic faces.
    pub match_derivative: bool,
}

impl Problem {
    pub fn new(domain: Domain, beta: RDParams, ic: InitialCondition, colloc: CollocationSet) -> Result<Self> {
        let p = Self {
            domain,
            beta,
            ic,
            sources: Sources::zero(),
            colloc,
            weights: LossWeights::default(),
            reduction: Reduction::Sum,
            match_derivative: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.beta.validate()?;
        self.colloc.validate(&self.domain)?;
        let nb = self.weights.boundary.len();
        if nb != 1 && nb != self.colloc.boundary.len() {
            return config_err(format!(
                "{nb} boundary weights for {} segments",
                self.colloc.boundary.len()
            ));
        }
        let ws = self.weights.boundary.iter().chain(std::iter::once(&self.weights.initial));
        if ws.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return config_err("loss weights must be finite and nonnegative");
        }
        Ok(())
    }

    fn scale(&self, n: usize) -> f64 {
        match self.reduction {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / n.max(1) as f64,
        }
    }
}

/// Loss components. Boundary and initial entries are unweighted; `l_a` and
/// `l_s` split the weighted total by species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pde: f64,
    pub l_bc: Vec<f64>,
    pub l_ic: f64,
    pub l_a: f64,
    pub l_s: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `Σ λ_k L_BC,k`
    pub fn weighted_bc(&self, w: &LossWeights) -> f64 {
        self.l_bc.iter().enumerate().map(|(k, l)| w.segment(k) * l).sum()
    }

    pub fn l_bc_total(&self) -> f64 {
        self.l_bc.iter().sum()
    }

    /// `|total − (L_PDE + Σ λ_k L_BC,k + λ_IC L_IC)|`
    pub fn decomposition_residual(&self, w: &LossWeights) -> f64 {
        (self.total - (self.l_pde + self.weighted_bc(w) + w.initial * self.l_ic)).abs()
    }
}

/// Loss, optional gradient and the circuit executions spent.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub breakdown: LossBreakdown,
    pub grad: Option<Vec<f64>>,
    pub circuit_evals: u64,
}

/// Per-task contribution before the ordered reduction.
struct Contribution {
    term: Term,
    species: [f64; 2],
    grad: Option<Vec<f64>>,
    evals: u64,
}

#[derive(Clone, Copy)]
enum Term {
    Pde,
    Bc(usize),
    Ic,
}

#[derive(Clone, Copy)]
enum Task {
    Pde(usize),
    Bc(usize, usize),
    Ic(usize),
}

fn add_into(acc: &mut [f64], g: &[f64], s: f64) {
    for (a, v) in acc.iter_mut().zip(g) {
        *a += s * v;
    }
}

fn pde_task(model: &dyn FieldModel, p: &Problem, pt: &[f64], with_grad: bool) -> Result<Contribution> {
    let q = p.sources.at(pt);
    let scale = p.scale(p.colloc.interior.len());
    let species = |jet: &FieldJet| {
        let r = residuals(&PointFields::from(jet), &p.beta, q);
        [scale * r[0] * r[0], scale * r[1] * r[1]]
    };
    if !with_grad {
        let (jet, evals) = model.jet(pt, Order::Second)?;
        return Ok(Contribution {
            term: Term::Pde,
            species: species(&jet),
            grad: None,
            evals,
        });
    }
    let seed = |jet: &FieldJet| -> FieldCotangent {
        let r = residuals(&PointFields::from(jet), &p.beta, q);
        let partials = residual_sensitivities(jet.value, &p.beta);
        let g = ResidualSensitivities::new(r, &partials);
        let mut bar = FieldJet::zeros(jet.dim());
        let w = 2.0 * scale;
        bar.value = [w * g.g_a, w * g.g_s];
        let d = jet.dim();
        bar.first[d - 1] = [w * r[0] * partials.dt[0], w * r[1] * partials.dt[1]];
        for c in 0..d - 1 {
            bar.second[c] = [w * r[0] * partials.laplacian[0], w * r[1] * partials.laplacian[1]];
        }
        bar
    };
    let (jet, grad, evals) = model.jet_vjp(pt, Order::Second, &seed)?;
    Ok(Contribution {
        term: Term::Pde,
        species: species(&jet),
        grad: Some(grad),
        evals,
    })
}

fn ic_task(model: &dyn FieldModel, p: &Problem, pt: &[f64], with_grad: bool) -> Result<Contribution> {
    let target = p.ic.eval(&pt[..pt.len() - 1], &p.beta);
    let scale = p.scale(p.colloc.initial.len());
    let err = |jet: &FieldJet| [jet.value[0] - target[0], jet.value[1] - target[1]];
    let (jet, grad, evals) = if with_grad {
        let seed = |jet: &FieldJet| {
            let e = err(jet);
            let mut bar = FieldJet::zeros(jet.dim());
            bar.value = [2.0 * scale * e[0], 2.0 * scale * e[1]];
            bar
        };
        let (j, g, n) = model.jet_vjp(pt, Order::Value, &seed)?;
        (j, Some(g), n)
    } else {
        let (j, n) = model.jet(pt, Order::Value)?;
        (j, None, n)
    };
    let e = err(&jet);
    Ok(Contribution {
        term: Term::Ic,
        species: [scale * e[0] * e[0], scale * e[1] * e[1]],
        grad,
        evals,
    })
}

fn bc_task(model: &dyn FieldModel, p: &Problem, seg: usize, k: usize, with_grad: bool) -> Result<Contribution> {
    let s = &p.colloc.boundary[seg];
    let (lo, hi) = (&s.lo[k], &s.hi[k]);
    let scale = p.scale(s.lo.len());
    let order = if p.match_derivative { Order::First } else { Order::Value };
    let axis = s.axis;
    let mismatch = |a: &FieldJet, b: &FieldJet| -> ([f64; 2], [f64; 2]) {
        let dv = [a.value[0] - b.value[0], a.value[1] - b.value[1]];
        let dn = if p.match_derivative {
            [a.first[axis][0] - b.first[axis][0], a.first[axis][1] - b.first[axis][1]]
        } else {
            [0.0; 2]
        };
        (dv, dn)
    };
    let species = |dv: [f64; 2], dn: [f64; 2]| {
        [
            scale * (dv[0] * dv[0] + dn[0] * dn[0]),
            scale * (dv[1] * dv[1] + dn[1] * dn[1]),
        ]
    };
    let (jlo, n_lo) = model.jet(lo, order)?;
    let (jhi, n_hi) = model.jet(hi, order)?;
    let (dv, dn) = mismatch(&jlo, &jhi);
    if !with_grad {
        return Ok(Contribution {
            term: Term::Bc(seg),
            species: species(dv, dn),
            grad: None,
            evals: n_lo + n_hi,
        });
    }
    let seed_for = |sign: f64| {
        move |jet: &FieldJet| {
            let mut bar = FieldJet::zeros(jet.dim());
            let w = 2.0 * scale * sign;
            bar.value = [w * dv[0], w * dv[1]];
            if p.match_derivative {
                bar.first[axis] = [w * dn[0], w * dn[1]];
            }
            bar
        }
    };
    let (_, g_lo, m_lo) = model.jet_vjp(lo, order, &seed_for(1.0))?;
    let (_, g_hi, m_hi) = model.jet_vjp(hi, order, &seed_for(-1.0))?;
    let mut grad = g_lo;
    add_into(&mut grad, &g_hi, 1.0);
    Ok(Contribution {
        term: Term::Bc(seg),
        species: species(dv, dn),
        grad: Some(grad),
        evals: n_lo + n_hi + m_lo + m_hi,
    })
}

/// Loss (and optionally its gradient) over the whole collocation set.
///
/// Points are processed in parallel and reduced sequentially in a fixed
/// order, so results do not depend on the thread count.
pub fn evaluate(model: &dyn FieldModel, problem: &Problem, with_grad: bool) -> Result<LossEval> {
    if model.dim() != problem.domain.dim() {
        return Err(crate::error::Error::Shape(format!(
            "model takes {} coordinates, domain has {}",
            model.dim(),
            problem.domain.dim()
        )));
    }
    if problem.colloc.interior.is_empty() {
        return config_err("empty interior collocation set");
    }
    let c = &problem.colloc;
    let mut tasks: Vec<Task> = (0..c.interior.len()).map(Task::Pde).collect();
    for (s, seg) in c.boundary.iter().enumerate() {
        tasks.extend((0..seg.lo.len()).map(|k| Task::Bc(s, k)));
    }
    tasks.extend((0..c.initial.len()).map(Task::Ic));

    let parts: Vec<Contribution> = tasks
        .par_iter()
        .map(|t| match *t {
            Task::Pde(i) => pde_task(model, problem, &c.interior[i], with_grad),
            Task::Bc(s, k) => bc_task(model, problem, s, k, with_grad),
            Task::Ic(i) => ic_task(model, problem, &c.initial[i], with_grad),
        })
        .collect::<Result<_>>()?;

    let n_seg = c.boundary.len();
    let mut pde = [0.0; 2];
    let mut bc = vec![[0.0; 2]; n_seg];
    let mut ic = [0.0; 2];
    let mut grad = with_grad.then(|| vec![0.0; model.n_params()]);
    let mut evals = 0;
    for part in &parts {
        let (acc, w) = match part.term {
            Term::Pde => (&mut pde, 1.0),
            Term::Bc(s) => (&mut bc[s], problem.weights.segment(s)),
            Term::Ic => (&mut ic, problem.weights.initial),
        };
        acc[0] += part.species[0];
        acc[1] += part.species[1];
        if let (Some(g), Some(pg)) = (grad.as_mut(), part.grad.as_ref()) {
            add_into(g, pg, w);
        }
        evals += part.evals;
    }
    let w = &problem.weights;
    let species = |i: usize| {
        pde[i] + bc.iter().enumerate().map(|(k, b)| w.segment(k) * b[i]).sum::<f64>() + w.initial * ic[i]
    };
    let l_a = species(0);
    let l_s = species(1);
    let breakdown = LossBreakdown {
        l_pde: pde[0] + pde[1],
        l_bc: bc.iter().map(|b| b[0] + b[1]).collect(),
        l_ic: ic[0] + ic[1],
        l_a,
        l_s,
        total: l_a + l_s,
    };
    Ok(LossEval {
        breakdown,
        grad,
        circuit_evals: evals,
    })
}

pub fn total_loss(model: &dyn FieldModel, problem: &Problem) -> Result<LossBreakdown> {
    Ok(evaluate(model, problem, false)?.breakdown)
}

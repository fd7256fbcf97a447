//! Ground-truth fields from an adaptive Dormand–Prince integrator applied
//! to the method-of-lines semi-discretization on a periodic grid.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::physics::{Domain, InitialCondition, RDParams};

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Right-hand side `f(t, y, dy)`.
pub type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) + 'a;

fn norm2(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_finite(k: &[f64], t: f64, y: &[f64]) -> Result<()> {
    if k.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration {
            t,
            state_norm: norm2(y),
            reason: "non-finite derivative".into(),
        })
    }
}

/// One embedded step. `k1` may carry `f(t, y)` from the previous accepted
/// step; on return it holds `f(t + h, y_new)`.
fn dp_step(f: &Rhs<'_>, y: &[f64], t: f64, h: f64, k1: &mut Vec<f64>, have_k1: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    if have_k1 {
        k[0].copy_from_slice(k1);
    } else {
        f(t, y, &mut k[0]);
        check_finite(&k[0], t, y)?;
    }
    let mut tmp = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in A[s][..s].iter().enumerate() {
                acc += a * k[j][i];
            }
            tmp[i] = y[i] + h * acc;
        }
        f(t + C[s] * h, &tmp, &mut k[s]);
        check_finite(&k[s], t + C[s] * h, &tmp)?;
    }
    // stage 7 is evaluated at the 5th-order solution
    let y_new = tmp;
    let mut err = vec![0.0; n];
    for i in 0..n {
        let mut e = 0.0;
        for s in 0..7 {
            e += (B5[s] - B4[s]) * k[s][i];
        }
        err[i] = h * e;
    }
    k1.clone_from(&k[6]);
    Ok((y_new, err))
}

/// `(y(t + h), error estimate)` with the Dormand–Prince 5(4) pair.
pub fn rk45_step(f: &Rhs<'_>, y: &[f64], t: f64, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(h > 0.0) {
        return config_err(format!("step size must be positive, got {h}"));
    }
    let mut k1 = Vec::new();
    dp_step(f, y, t, h, &mut k1, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-14,
        }
    }
}

/// RMS of `err_i / (atol + rtol·max(|y_i|, |y_new_i|))`.
pub fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], tol: &Tolerances) -> f64 {
    let s: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub accept: bool,
    pub next_h: f64,
}

/// Accept when `err_norm ≤ 1`; next step `h·clamp(0.9·err_norm^(−1/5), 0.2, 5)`.
pub fn adapt_step(err_norm: f64, h: f64, tol: &Tolerances) -> Result<StepDecision> {
    let factor = if err_norm == 0.0 {
        5.0
    } else {
        (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
    };
    let accept = err_norm <= 1.0;
    let next_h = h * factor;
    if !accept && next_h < tol.h_min {
        return Err(Error::Integration {
            t: f64::NAN,
            state_norm: f64::NAN,
            reason: format!("step size {next_h:e} below minimum {:e}", tol.h_min),
        });
    }
    Ok(StepDecision { accept, next_h })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Integrates from `t0` and records the state at every time in `times`
/// (nondecreasing, `≥ t0`). Steps are shortened to land on them exactly.
pub fn integrate(f: &Rhs<'_>, y0: &[f64], t0: f64, times: &[f64], tol: &Tolerances) -> Result<(Vec<Vec<f64>>, SolverStats)> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return config_err("snapshot times must be nondecreasing and not before t0");
    }
    let mut stats = SolverStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let span = times.last().map_or(0.0, |&e| e - t0);
    let mut h = (span * 1e-3).max(tol.h_min * 10.0);
    let mut k1 = Vec::new();
    let mut have_k1 = false;
    let mut out = Vec::with_capacity(times.len());
    let wrap = |e: Error, t: f64, y: &[f64]| match e {
        Error::Integration { reason, .. } => Error::Integration {
            t,
            state_norm: norm2(y),
            reason,
        },
        other => other,
    };
    for &target in times {
        while t < target {
            let step = h.min(target - t);
            let (y_new, err) = dp_step(f, &y, t, step, &mut k1, have_k1)?;
            stats.rhs_evals += if have_k1 { 6 } else { 7 };
            let en = error_norm(&err, &y, &y_new, tol);
            let en = if en.is_finite() { en } else { f64::INFINITY };
            let d = adapt_step(en, step, tol).map_err(|e| wrap(e, t, &y))?;
            if d.accept {
                stats.accepted += 1;
                // land exactly on the target even after rounding
                t = if step == target - t { target } else { t + step };
                y = y_new;
                have_k1 = true;
                // a step shortened to hit a snapshot keeps the longer size
                h = if step < h { h.max(d.next_h) } else { d.next_h };
            } else {
                stats.rejected += 1;
                have_k1 = false;
                h = d.next_h;
                if !h.is_finite() || h <= 0.0 {
                    return Err(Error::Integration {
                        t,
                        state_norm: norm2(&y),
                        reason: "step size collapsed".into(),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

/// Snapshot fields on a uniform periodic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    /// Node coordinates per spatial axis.
    pub axes: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `[snapshot][node]`, nodes ordered with the last axis fastest.
    pub c_a: Vec<Vec<f64>>,
    pub c_s: Vec<Vec<f64>>,
    pub meta: Option<ReferenceMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub beta: RDParams,
    pub ic: String,
    pub tolerances: Tolerances,
    pub stats: SolverStats,
}

impl GridSolution {
    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn spatial_dim(&self) -> usize {
        self.axes.len()
    }

    /// Spatial coordinates of node `k`.
    pub fn node(&self, mut k: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.axes.len()];
        for (a, axis) in self.axes.iter().enumerate().rev() {
            p[a] = axis[k % axis.len()];
            k /= axis.len();
        }
        p
    }

    pub fn species(&self, i: usize) -> &[Vec<f64>] {
        if i == 0 {
            &self.c_a
        } else {
            &self.c_s
        }
    }

    /// Same grid and times with fields from `f(x…, t)`.
    pub fn evaluate(&self, f: impl Fn(&[f64]) -> Result<[f64; 2]>) -> Result<GridSolution> {
        let n = self.n_nodes();
        let nodes: Vec<Vec<f64>> = (0..n).map(|k| self.node(k)).collect();
        let mut c_a = Vec::with_capacity(self.times.len());
        let mut c_s = Vec::with_capacity(self.times.len());
        for &t in &self.times {
            let mut a = Vec::with_capacity(n);
            let mut s = Vec::with_capacity(n);
            for node in &nodes {
                let mut p = node.clone();
                p.push(t);
                let v = f(&p)?;
                a.push(v[0]);
                s.push(v[1]);
            }
            c_a.push(a);
            c_s.push(s);
        }
        Ok(GridSolution {
            axes: self.axes.clone(),
            times: self.times.clone(),
            c_a,
            c_s,
            meta: None,
        })
    }

    /// Every `stride`-th node along each axis.
    pub fn downsample(&self, stride: usize) -> Result<GridSolution> {
        if stride == 0 {
            return config_err("downsample stride must be positive");
        }
        if stride == 1 {
            return Ok(self.clone());
        }
        let keep: Vec<Vec<usize>> = self.axes.iter().map(|a| (0..a.len()).step_by(stride).collect()).collect();
        let dims: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        let mut idx = vec![0usize];
        for (a, k) in keep.iter().enumerate() {
            let n = dims[a];
            idx = idx.iter().flat_map(|&base| k.iter().map(move |&i| base * n + i)).collect();
        }
        let pick = |f: &Vec<Vec<f64>>| f.iter().map(|s| idx.iter().map(|&i| s[i]).collect()).collect();
        Ok(GridSolution {
            axes: self.axes.iter().zip(&keep).map(|(a, k)| k.iter().map(|&i| a[i]).collect()).collect(),
            times: self.times.clone(),
            c_a: pick(&self.c_a),
            c_s: pick(&self.c_s),
            meta: self.meta.clone(),
        })
    }

    pub fn same_grid(&self, other: &GridSolution) -> bool {
        self.axes == other.axes && self.times == other.times
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Nodes per spatial axis.
    pub grid: Vec<usize>,
    pub snapshots: Vec<f64>,
    pub tolerances: Tolerances,
}

impl ReferenceConfig {
    pub fn default_1d() -> Self {
        Self {
            grid: vec![512],
            snapshots: (0..=20).map(|k| k as f64 / 20.0).collect(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn default_2d() -> Self {
        Self {
            grid: vec![128, 128],
            snapshots: vec![0.0, 0.330, 0.5, 0.665, 1.0],
            tolerances: Tolerances::default(),
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

/// Periodic second-order Laplacian of a field stored with the last axis
/// fastest.
fn laplacian(u: &[f64], dims: &[usize], inv_h2: &[f64], out: &mut [f64]) {
    match dims {
        [n] => {
            let n = *n;
            for i in 0..n {
                let l = u[(i + n - 1) % n];
                let r = u[(i + 1) % n];
                out[i] = (l - 2.0 * u[i] + r) * inv_h2[0];
            }
        }
        [nx, ny] => {
            let (nx, ny) = (*nx, *ny);
            for i in 0..nx {
                let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
                for j in 0..ny {
                    let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
                    let c = u[i * ny + j];
                    out[i * ny + j] = (u[im * ny + j] - 2.0 * c + u[ip * ny + j]) * inv_h2[0]
                        + (u[i * ny + jm] - 2.0 * c + u[i * ny + jp]) * inv_h2[1];
                }
            }
        }
        _ => unreachable!("validated spatial dimension"),
    }
}

pub fn solve_reference(domain: &Domain, cfg: &ReferenceConfig, beta: &RDParams, ic: &InitialCondition) -> Result<GridSolution> {
    domain.validate()?;
    beta.validate()?;
    if cfg.grid.len() != domain.spatial_dim() {
        return config_err(format!(
            "{} grid sizes for a {}-dimensional domain",
            cfg.grid.len(),
            domain.spatial_dim()
        ));
    }
    if cfg.grid.iter().any(|&n| n < 8) {
        return config_err(format!("reference grid {:?} needs at least 8 nodes per axis", cfg.grid));
    }
    let axes: Vec<Vec<f64>> = domain
        .space
        .iter()
        .zip(&cfg.grid)
        .map(|(&(lo, hi), &n)| (0..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
        .collect();
    let inv_h2: Vec<f64> = domain
        .space
        .iter()
        .zip(&cfg.grid)
        .map(|(&(lo, hi), &n)| {
            let h = (hi - lo) / n as f64;
            1.0 / (h * h)
        })
        .collect();
    let template = GridSolution {
        axes,
        times: vec![],
        c_a: vec![],
        c_s: vec![],
        meta: None,
    };
    let n = template.n_nodes();
    let mut y0 = vec![0.0; 2 * n];
    for k in 0..n {
        let v = ic.eval(&template.node(k), beta);
        y0[k] = v[0];
        y0[n + k] = v[1];
    }
    let dims = cfg.grid.clone();
    let b = *beta;
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (a, s) = y.split_at(n);
        let (da, ds) = dy.split_at_mut(n);
        laplacian(a, &dims, &inv_h2, da);
        laplacian(s, &dims, &inv_h2, ds);
        for k in 0..n {
            let auto = b.kappa1 * a[k] * a[k] * s[k];
            da[k] = b.d_a * da[k] + auto - b.kappa2 * a[k];
            ds[k] = b.d_s * ds[k] - auto + b.kappa3;
        }
    };
    let (states, stats) = integrate(&rhs, &y0, domain.time.0, &cfg.snapshots, &cfg.tolerances)?;
    let mut sol = template;
    sol.times = cfg.snapshots.clone();
    for st in states {
        sol.c_a.push(st[..n].to_vec());
        sol.c_s.push(st[n..].to_vec());
    }
    sol.meta = Some(ReferenceMeta {
        beta: *beta,
        ic: ic.name().to_string(),
        tolerances: cfg.tolerances,
        stats,
    });
    Ok(sol)
}

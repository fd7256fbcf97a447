//! Acceptance suite: one test and one PASS/FAIL line per criterion.
//!
//! Property criteria assert. The two training-outcome criteria (5b, 6)
//! always print their verdict but only fail the test when
//! `QPINN_STRICT_ACCEPTANCE=1`.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use qpinn::cli::train_run;
use qpinn::config::RunConfig;
use qpinn::diff::{loss_grad, shift_first, shift_second, FieldCotangent, FieldJet, FieldModel, Order, ShiftEvaluator};
use qpinn::metrics::compare;
use qpinn::model::{GatingMode, Model, ModelConfig, Variant};
use qpinn::physics::{
    sample_collocation, total_loss, CollocationConfig, Domain, InitialCondition, LossWeights, PointFields, Problem,
    RDParams, Reduction, Sources,
};
use qpinn::reference::{integrate, solve_reference, GridSolution, ReferenceConfig, Tolerances};
use qpinn::statevector::{Gate, ObservablePartition, StateVector};
use qpinn::train::{HistoryRecord, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fd_gradient, grad_close, random_model, small_problem};

/// Keeps criteria from competing for cores so runtimes mean something.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {n}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn strict() -> bool {
    std::env::var("QPINN_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1")
}

#[test]
fn criterion_1_gradient_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let (mut models, mut components) = (0, 0);
    for k in 0..60u64 {
        let variant = if k % 2 == 0 { Variant::FnnTeQpinn } else { Variant::QnnTeQpinn };
        let nq = rng.gen_range(2..=4);
        let nl = rng.gen_range(1..=3);
        let domain = if k % 5 == 4 { Domain::square_2d() } else { Domain::interval_1d() };
        let m = random_model(variant, nq, nl, &domain, 1000 + k);
        let mut problem = small_problem(domain, 1000 + k);
        problem.match_derivative = k % 3 == 0;
        let (_, grad) = loss_grad(&m, &problem).unwrap();
        let fd = fd_gradient(&m, 1e-5, |m| total_loss(m, &problem).unwrap().total);
        if let Some((i, a, b)) = grad_close(&grad, &fd) {
            failures.push(format!("model {k} ({variant:?} q={nq} L={nl}) component {i}: {a:e} vs {b:e}"));
        }
        models += 1;
        components += grad.len();
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 300.0;
    report(
        "1 gradient oracle",
        pass,
        &format!("{models} models, {components} components, {} mismatches, {secs:.1}s (budget 300s)", failures.len()),
    );
    assert!(failures.is_empty(), "{failures:?}");
    assert!(secs < 300.0);
}

#[test]
fn criterion_2_shift_rule_exactness() {
    let _g = serial();
    let f = |a: &[f64]| {
        let s = StateVector::zero(1)
            .unwrap()
            .applied(&Gate::Ry { target: 0, angle: a[0] })
            .unwrap();
        s.z_expectations()[0]
    };
    let ev = ShiftEvaluator::new(f, vec![0]);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let th = -PI + 2.0 * PI * (k as f64 + 0.5) / 100.0;
        worst = worst.max((shift_first(&ev, 0, &[th]) + th.sin()).abs());
        worst = worst.max((shift_second(&ev, 0, 0, &[th]) + th.cos()).abs());
    }
    let pass = worst < 1e-12;
    report("2 shift-rule exactness", pass, &format!("100 angles, max error {worst:.2e} (tol 1e-12)"));
    assert!(pass);
}

fn random_gate(rng: &mut ChaCha8Rng, n: usize) -> Gate {
    let t = rng.gen_range(0..n);
    let a = rng.gen_range(-2.0 * PI..2.0 * PI);
    match rng.gen_range(0..4) {
        0 => Gate::Rx { target: t, angle: a },
        1 => Gate::Ry { target: t, angle: a },
        2 => Gate::Rz { target: t, angle: a },
        _ => Gate::Cnot {
            control: t,
            target: (t + rng.gen_range(1..n)) % n,
        },
    }
}

#[test]
fn criterion_3_simulator_invariants() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut norm_err: f64 = 0.0;
    for _ in 0..20 {
        let mut s = StateVector::zero(6).unwrap();
        for _ in 0..200 {
            s.apply(&random_gate(&mut rng, 6)).unwrap();
        }
        norm_err = norm_err.max((s.norm_sqr() - 1.0).abs());
    }

    let mut bound_violations = 0;
    for k in 0..1000 {
        let n = 2 + k % 5;
        let mut s = StateVector::zero(n).unwrap();
        for _ in 0..(3 * n) {
            s.apply(&random_gate(&mut rng, n)).unwrap();
        }
        let p = ObservablePartition::split_halves(n).unwrap();
        for q in p.sets() {
            if s.expectation_zsum(q).unwrap().abs() > q.len() as f64 + 1e-12 {
                bound_violations += 1;
            }
        }
    }

    let mut round_trip: f64 = 0.0;
    for _ in 0..20 {
        let gates: Vec<Gate> = (0..100).map(|_| random_gate(&mut rng, 5)).collect();
        let mut s = StateVector::zero(5).unwrap();
        s.apply(&Gate::Ry { target: 1, angle: 0.9 }).unwrap();
        let start = s.clone();
        for g in &gates {
            s.apply(g).unwrap();
        }
        for g in gates.iter().rev() {
            s.apply(&g.inverse()).unwrap();
        }
        for (a, b) in s.amplitudes().iter().zip(start.amplitudes()) {
            round_trip = round_trip.max((a - b).norm());
        }
    }
    let pass = norm_err < 1e-10 && bound_violations == 0 && round_trip < 1e-12;
    report(
        "3 simulator invariants",
        pass,
        &format!(
            "norm drift {norm_err:.1e} (tol 1e-10), {bound_violations}/1000 states over |Q_i|, round trip {round_trip:.1e} (tol 1e-12)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_reference_solver() {
    let _g = serial();
    let beta = RDParams {
        d_a: 0.1,
        d_s: 0.1,
        kappa1: 0.0,
        kappa2: 0.0,
        kappa3: 0.0,
    };
    let ic = InitialCondition::custom(|x| [(PI * x[0]).cos(), 0.5 * (PI * x[0]).cos()]);
    let cfg = ReferenceConfig {
        grid: vec![256],
        snapshots: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        tolerances: Tolerances::default(),
    };
    let sol = solve_reference(&Domain::interval_1d(), &cfg, &beta, &ic).unwrap();
    let mut fourier: f64 = 0.0;
    for (s, &t) in sol.times.iter().enumerate() {
        let decay = (-0.1 * PI * PI * t).exp();
        for k in 0..sol.n_nodes() {
            let c = (PI * sol.node(k)[0]).cos() * decay;
            fourier = fourier.max((sol.c_a[s][k] - c).abs()).max((sol.c_s[s][k] - 0.5 * c).abs());
        }
    }

    let beta = RDParams::default();
    let ss = beta.steady_state();
    let cfg = ReferenceConfig {
        grid: vec![64],
        snapshots: (0..=10).map(|k| k as f64 / 10.0).collect(),
        tolerances: Tolerances::default(),
    };
    let sol = solve_reference(&Domain::interval_1d(), &cfg, &beta, &InitialCondition::HomogeneousSteadyState).unwrap();
    let mut steady: f64 = 0.0;
    for s in 0..sol.times.len() {
        for k in 0..sol.n_nodes() {
            steady = steady
                .max((sol.c_a[s][k] / ss[0] - 1.0).abs())
                .max((sol.c_s[s][k] / ss[1] - 1.0).abs());
        }
    }

    let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
    let (ys, _) = integrate(&f, &[1.0], 0.0, &[1.0], &Tolerances::default()).unwrap();
    let expo = (ys[0][0] - (-1.0f64).exp()).abs();

    let pass = fourier < 1e-4 && steady < 1e-8 && expo < 1e-7;
    report(
        "4 reference solver",
        pass,
        &format!(
            "Fourier decay {fourier:.2e} (tol 1e-4), steady state rel {steady:.2e} (tol 1e-8), exp ODE {expo:.2e} (tol 1e-7)"
        ),
    );
    assert!(pass);
}

/// `c_A = 0.3 + 0.2 sin(πx) e^{−t}`, `c_S = 0.8 + 0.1 cos(πx) t` with exact
/// derivatives and no parameters.
struct SmoothField;

impl SmoothField {
    fn fields(p: &[f64]) -> FieldJet {
        let (x, t) = (p[0], p[1]);
        let (s, c, e) = ((PI * x).sin(), (PI * x).cos(), (-t).exp());
        FieldJet {
            value: [0.3 + 0.2 * s * e, 0.8 + 0.1 * c * t],
            first: vec![[0.2 * PI * c * e, -0.1 * PI * s * t], [-0.2 * s * e, 0.1 * c]],
            second: vec![[-0.2 * PI * PI * s * e, -0.1 * PI * PI * c * t], [0.0, 0.0]],
        }
    }
}

impl FieldModel for SmoothField {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        0
    }
    fn params(&self) -> Vec<f64> {
        vec![]
    }
    fn set_params(&mut self, _: &[f64]) {}
    fn uses_circuits(&self) -> bool {
        false
    }
    fn jet(&self, coords: &[f64], _: Order) -> qpinn::Result<(FieldJet, u64)> {
        Ok((Self::fields(coords), 0))
    }
    fn jet_vjp(
        &self,
        coords: &[f64],
        _: Order,
        _: &dyn Fn(&FieldJet) -> FieldCotangent,
    ) -> qpinn::Result<(FieldJet, Vec<f64>, u64)> {
        Ok((Self::fields(coords), vec![], 0))
    }
}

/// Linear FNN embedding, no gating: the class the closure target lives in.
fn closure_architecture() -> ModelConfig {
    ModelConfig {
        variant: Variant::FnnTeQpinn,
        fnn_hidden: vec![],
        gating: GatingMode::None,
        ..ModelConfig::default()
    }
}

/// Target angles `α_0 = π x̂ + 0.4 t̂ + 0.1`, `α_1 = 0.6 t̂ + 0.3`; the x
/// slope wraps the angle by 2π across the interval so the field is periodic.
fn closure_problem() -> Problem {
    let domain = Domain::interval_1d();
    let beta = RDParams::default();
    let mut teacher = ModelConfig {
        init_range: 0.8,
        ..closure_architecture()
    }
    .build(&domain, &mut ChaCha8Rng::seed_from_u64(11))
    .unwrap();
    if let Model::Quantum(spec) = &mut teacher {
        spec.embedding
            .params_mut()
            .copy_from_slice(&[PI, 0.4, 0.0, 0.6, 0.1, 0.3]);
    }
    let teacher = std::sync::Arc::new(teacher);
    let t1 = teacher.clone();
    let field = move |p: &[f64]| PointFields::from(&t1.jet(p, Order::Second).unwrap().0);
    let t2 = teacher.clone();
    let ic = InitialCondition::custom(move |x| t2.predict(&[x[0], 0.0]).unwrap());
    let cfg = CollocationConfig {
        interior: vec![8, 8],
        boundary_times: 8,
        initial: vec![16],
        ..CollocationConfig::default_1d()
    };
    let mut p = Problem::new(domain.clone(), beta, ic, sample_collocation(&domain, &cfg, 0).unwrap()).unwrap();
    p.sources = Sources::manufactured(beta, field);
    p
}

fn closure_run(problem: &Problem, seed: u64) -> Vec<HistoryRecord> {
    let student = closure_architecture()
        .build(&problem.domain, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        record_wall_time: false,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(student, cfg, problem, None, seed).unwrap();
    t.run().unwrap();
    t.state.history
}

static CLOSURE_RUNS: OnceLock<Vec<(Problem, Vec<HistoryRecord>)>> = OnceLock::new();

fn closure_runs() -> &'static [(Problem, Vec<HistoryRecord>)] {
    CLOSURE_RUNS.get_or_init(|| {
        let p = closure_problem();
        (0..5).map(|s| (p.clone(), closure_run(&p, s))).collect()
    })
}

#[test]
fn criterion_5_manufactured_closure() {
    let _g = serial();
    let beta = RDParams::default();
    let domain = Domain::interval_1d();
    let colloc = sample_collocation(&domain, &CollocationConfig::default_1d(), 0).unwrap();
    let mut problem = Problem::new(domain, beta, InitialCondition::custom(|x| SmoothField::fields(&[x[0], 0.0]).value), colloc).unwrap();
    problem.sources = Sources::manufactured(beta, |p| PointFields::from(&SmoothField::fields(p)));
    let clamped = total_loss(&SmoothField, &problem).unwrap().l_pde;
    let clamp_pass = clamped < 1e-10;

    let runs = closure_runs();
    let finals: Vec<f64> = runs
        .iter()
        .map(|(_, h)| h.iter().map(|r| r.loss.total).fold(f64::INFINITY, f64::min))
        .collect();
    let reached = finals.iter().filter(|&&v| v < 1e-6).count();
    let default_seed = finals[0];
    let train_pass = default_seed < 1e-6;
    let pass = clamp_pass && train_pass;
    report(
        "5 manufactured closure",
        pass,
        &format!(
            "clamped L_PDE {clamped:.2e} (tol 1e-10); 2-qubit FNN-TE on realizable target, seed 0: best total {default_seed:.2e} in {} epochs (tol 1e-6); seeds 0-4 reaching 1e-6: {reached}/5, best totals {}",
            runs[0].1.len(),
            finals.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(" ")
        ),
    );
    assert!(clamp_pass);
    if strict() {
        assert!(train_pass);
    }
}

/// First epoch after which every 20-epoch window changes the loss by less
/// than 5%; `None` when the curve never settles.
fn flatten_epoch(h: &[HistoryRecord]) -> Option<usize> {
    let l: Vec<f64> = h.iter().map(|r| r.loss.total).collect();
    let mut settled = None;
    for e in (20..l.len()).rev() {
        if ((l[e] - l[e - 20]) / l[e - 20]).abs() < 0.05 {
            settled = Some(h[e].epoch);
        } else {
            break;
        }
    }
    settled
}

struct DeskRuns {
    seconds: f64,
    /// `[seed] -> [pinn, fnn, qnn]`
    runs: Vec<[Vec<HistoryRecord>; 3]>,
    weights: LossWeights,
}

static DESK: OnceLock<DeskRuns> = OnceLock::new();

fn desk_runs() -> &'static DeskRuns {
    DESK.get_or_init(|| {
        let cfg = RunConfig::default_for(1).unwrap();
        let problem = cfg.problem.build().unwrap();
        let start = Instant::now();
        let runs = (0..5u64)
            .map(|seed| {
                [Variant::Pinn, Variant::FnnTeQpinn, Variant::QnnTeQpinn].map(|variant| {
                    let mcfg = ModelConfig {
                        variant,
                        n_qubits: 2,
                        n_layers: 5,
                        ..cfg.model.clone()
                    };
                    let model = mcfg
                        .build(&problem.domain, &mut ChaCha8Rng::seed_from_u64(seed))
                        .unwrap();
                    let tcfg = TrainConfig {
                        epochs: 100,
                        record_wall_time: false,
                        ..TrainConfig::default()
                    };
                    let mut t = Trainer::new(model, tcfg, &problem, None, seed).unwrap();
                    t.run().unwrap();
                    t.state.history
                })
            })
            .collect();
        DeskRuns {
            seconds: start.elapsed().as_secs_f64(),
            runs,
            weights: problem.weights.clone(),
        }
    })
}

#[test]
fn criterion_6_desk_scale_ordering() {
    let _g = serial();
    let desk = desk_runs();
    let mut fnn_wins = 0;
    let mut qnn_earlier = 0;
    let mut rows = Vec::new();
    for (seed, [pinn, fnn, qnn]) in desk.runs.iter().enumerate() {
        let (lp, lf) = (pinn.last().unwrap().loss.total, fnn.last().unwrap().loss.total);
        if lf * 10.0 <= lp {
            fnn_wins += 1;
        }
        let (fp, fq) = (flatten_epoch(pinn), flatten_epoch(qnn));
        let earlier = match (fq, fp) {
            (Some(q), Some(p)) => q < p,
            (Some(_), None) => true,
            _ => false,
        };
        if earlier {
            qnn_earlier += 1;
        }
        let show = |e: Option<usize>| e.map_or("never".to_string(), |e| e.to_string());
        rows.push(format!(
            "s{seed}: PINN {lp:.2e} FNN {lf:.2e} ({:.1}x), flat QNN@{} PINN@{}",
            lp / lf,
            show(fq),
            show(fp)
        ));
    }
    let fast = desk.seconds < 1800.0;
    let pass = fnn_wins >= 3 && qnn_earlier >= 3 && fast;
    report(
        "6 desk-scale ordering",
        pass,
        &format!(
            "FNN-TE >=10x below PINN in {fnn_wins}/5 seeds (need 3); QNN-TE flattens before PINN in {qnn_earlier}/5 (need 3); 15 runs in {:.0}s (budget 1800s); {}",
            desk.seconds,
            rows.join("; ")
        ),
    );
    assert!(fast, "15 runs took {:.0}s", desk.seconds);
    if strict() {
        assert!(pass);
    }
}

#[test]
fn criterion_7_loss_decomposition() {
    let _g = serial();
    let desk = desk_runs();
    let mut worst_abs: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut epochs = 0;
    let mut check = |h: &[HistoryRecord], w: &LossWeights| {
        for r in h {
            let d = r.loss.decomposition_residual(w);
            worst_abs = worst_abs.max(d);
            worst_rel = worst_rel.max(d / r.loss.total.abs().max(1.0));
            epochs += 1;
        }
    };
    for runs in &desk.runs {
        for h in runs {
            check(h, &desk.weights);
        }
    }
    for (p, h) in closure_runs() {
        check(h, &p.weights);
    }
    // nontrivial weights, mean reduction, 2D
    let domain = Domain::square_2d();
    let mut p = small_problem(domain.clone(), 9);
    p.weights = LossWeights {
        boundary: vec![0.3, 2.5],
        initial: 4.0,
    };
    p.reduction = Reduction::Mean;
    let m = random_model(Variant::QnnTeQpinn, 3, 1, &domain, 9);
    let cfg = TrainConfig {
        epochs: 5,
        record_wall_time: false,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(m, cfg, &p, None, 9).unwrap();
    t.run().unwrap();
    check(&t.state.history, &p.weights);

    let pass = worst_rel <= 1e-12;
    report(
        "7 loss decomposition",
        pass,
        &format!("{epochs} logged epochs, max |residual| {worst_abs:.2e}, max residual / max(1, total) {worst_rel:.2e} (tol 1e-12)"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let mut total = 0;
    for variant in [Variant::Pinn, Variant::FnnTeQpinn, Variant::QnnTeQpinn] {
        let mut cfg = RunConfig::default_for(1).unwrap();
        cfg.model.variant = variant;
        cfg.problem.collocation = CollocationConfig {
            interior: vec![8, 8],
            boundary_times: 8,
            initial: vec![16],
            ..CollocationConfig::default_1d()
        };
        cfg.training.epochs = 4;
        cfg.training.record_wall_time = false;
        cfg.training.metrics_stride = 16;
        let reference = solve_reference(
            &cfg.problem.domain,
            &ReferenceConfig {
                grid: vec![64],
                ..ReferenceConfig::default_1d()
            },
            &cfg.problem.beta,
            &cfg.problem.ic,
        )
        .unwrap();
        let read = |sub: &str| {
            let d = dir.path().join(format!("{}-{sub}", variant.name()));
            train_run(&cfg, 7, Some(&reference), &d).unwrap();
            (
                std::fs::read(d.join("history.csv")).unwrap(),
                std::fs::read(d.join("checkpoint.json")).unwrap(),
            )
        };
        let a = read("a");
        let b = read("b");
        total += 1;
        if a == b && !a.0.is_empty() {
            identical += 1;
        }
    }
    let pass = identical == total;
    report(
        "8 determinism",
        pass,
        &format!("{identical}/{total} variants with byte-identical history CSV and checkpoint on rerun"),
    );
    assert!(pass);
}

fn grid(c_a: Vec<f64>, c_s: Vec<f64>) -> GridSolution {
    GridSolution {
        axes: vec![(0..c_a.len()).map(|k| k as f64).collect()],
        times: vec![0.0],
        c_a: vec![c_a],
        c_s: vec![c_s],
        meta: None,
    }
}

#[test]
fn criterion_9_metrics() {
    let _g = serial();
    let rep = compare(&grid(vec![3.0, 5.0], vec![3.0, 5.0]), &grid(vec![3.0, 4.0], vec![3.0, 4.0])).unwrap();
    let a = &rep.activator;
    let triple_err = (a.mse - 0.5)
        .abs()
        .max((a.rel_l2.unwrap() - 0.2).abs())
        .max((a.rel_linf.unwrap() - 0.25).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut scale_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let mut field = || (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>();
        let (pa, ps, ra, rs) = (field(), field(), field(), field());
        let c: f64 = rng.gen_range(0.01..50.0);
        let scaled = |v: &[f64]| v.iter().map(|x| c * x).collect::<Vec<_>>();
        let base = compare(&grid(pa.clone(), ps.clone()), &grid(ra.clone(), rs.clone())).unwrap();
        let sc = compare(&grid(scaled(&pa), scaled(&ps)), &grid(scaled(&ra), scaled(&rs))).unwrap();
        for i in 0..2 {
            let (b, s) = (base.species(i), sc.species(i));
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
            scale_err = scale_err.max(rel(s.mse, c * c * b.mse));
            if let (Some(x), Some(y)) = (s.rel_l2, b.rel_l2) {
                scale_err = scale_err.max(rel(x, y));
            }
            if let (Some(x), Some(y)) = (s.rel_linf, b.rel_linf) {
                scale_err = scale_err.max(rel(x, y));
            }
        }
    }
    let pass = triple_err < 1e-15 && scale_err < 1e-12;
    report(
        "9 metrics",
        pass,
        &format!("(3,5) vs (3,4) triple error {triple_err:.1e}; scale property over 100 pairs, max rel deviation {scale_err:.1e}"),
    );
    assert!(pass);
}

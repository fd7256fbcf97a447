mod common;

use approx::assert_abs_diff_eq;
use common::*;
use qpinn::diff::{input_gradient, input_laplacian, loss_grad, FieldModel, Order};
use qpinn::model::Variant;
use qpinn::physics::{evaluate, total_loss, Domain, LossWeights, Sources};

#[test]
fn cosine_model_input_derivatives() {
    let m = cosine_model();
    let g = input_gradient(&m, &[0.5, 0.3]).unwrap();
    assert_abs_diff_eq!(g[0][0], -(0.5f64).sin(), epsilon = 1e-14);
    assert_eq!(g[0][1], 0.0);
    assert_abs_diff_eq!(g[1][0], 0.0, epsilon = 1e-15);
    let l = input_laplacian(&m, &[0.5, 0.3]).unwrap();
    assert_abs_diff_eq!(l.laplacian[0], -(0.5f64).cos(), epsilon = 1e-14);
    assert_eq!(l.dt, [0.0, 0.0]);
}

#[test]
fn zero_fnn_has_zero_input_derivatives() {
    let mut m = cosine_model();
    m.embedding.params_mut().fill(0.0);
    let g = input_gradient(&m, &[0.2, 0.7]).unwrap();
    assert!(g.iter().flatten().all(|&v| v == 0.0));
    let l = input_laplacian(&m, &[0.2, 0.7]).unwrap();
    assert_eq!(l.laplacian, [0.0, 0.0]);
}

fn check_input_derivatives(variant: Variant, domain: Domain, seed: u64) {
    let m = random_model(variant, 3, 2, &domain, seed);
    let d = domain.dim();
    let p: Vec<f64> = (0..d).map(|c| if c + 1 == d { 0.4 } else { 0.3 - 0.5 * c as f64 }).collect();
    let (jet, _) = m.jet(&p, Order::Second).unwrap();
    let f = |q: &[f64]| m.predict(q).unwrap();
    for c in 0..d {
        let at = |h: f64| {
            let mut q = p.clone();
            q[c] += h;
            f(&q)
        };
        let h = 1e-5;
        let (fp, fm) = (at(h), at(-h));
        for i in 0..2 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!((jet.first[c][i] - fd).abs() < 1e-6, "first c={c} i={i}: {} vs {fd}", jet.first[c][i]);
        }
        if c + 1 == d {
            continue;
        }
        // second differences with one Richardson step
        let f0 = f(&p);
        let d2 = |h: f64| {
            let (a, b) = (at(h), at(-h));
            [(a[0] - 2.0 * f0[0] + b[0]) / (h * h), (a[1] - 2.0 * f0[1] + b[1]) / (h * h)]
        };
        let (coarse, fine) = (d2(2e-3), d2(1e-3));
        for i in 0..2 {
            let rich = (4.0 * fine[i] - coarse[i]) / 3.0;
            assert!((jet.second[c][i] - rich).abs() < 1e-4, "second c={c} i={i}: {} vs {rich}", jet.second[c][i]);
        }
    }
}

#[test]
fn input_derivatives_match_finite_differences() {
    for seed in 0..4 {
        check_input_derivatives(Variant::FnnTeQpinn, Domain::interval_1d(), seed);
        check_input_derivatives(Variant::QnnTeQpinn, Domain::interval_1d(), seed);
    }
    check_input_derivatives(Variant::FnnTeQpinn, Domain::square_2d(), 7);
    check_input_derivatives(Variant::QnnTeQpinn, Domain::square_2d(), 8);
}

fn check_loss_grad(variant: Variant, n_qubits: usize, n_layers: usize, domain: Domain, seed: u64, match_derivative: bool) {
    let m = random_model(variant, n_qubits, n_layers, &domain, seed);
    let mut problem = small_problem(domain, seed);
    problem.match_derivative = match_derivative;
    let (lb, grad) = loss_grad(&m, &problem).unwrap();
    assert!(lb.total > 0.0);
    let fd = fd_gradient(&m, 1e-5, |m| total_loss(m, &problem).unwrap().total);
    assert!(fd.iter().filter(|v| v.abs() > 1e-3).count() > fd.len() / 4);
    if let Some((i, a, b)) = grad_close(&grad, &fd) {
        panic!("{variant:?} q={n_qubits} L={n_layers} seed={seed}: component {i}: {a} vs {b}");
    }
}

#[test]
fn loss_grad_matches_finite_differences() {
    check_loss_grad(Variant::FnnTeQpinn, 2, 1, Domain::interval_1d(), 1, false);
    check_loss_grad(Variant::QnnTeQpinn, 2, 2, Domain::interval_1d(), 2, false);
    check_loss_grad(Variant::FnnTeQpinn, 3, 2, Domain::square_2d(), 3, false);
    check_loss_grad(Variant::QnnTeQpinn, 3, 1, Domain::square_2d(), 4, true);
    check_loss_grad(Variant::Pinn, 2, 1, Domain::interval_1d(), 5, true);
}

#[test]
fn gradient_is_additive_over_terms() {
    let domain = Domain::interval_1d();
    let m = random_model(Variant::FnnTeQpinn, 2, 2, &domain, 11);
    let p = small_problem(domain, 11);
    let full = evaluate(&m, &p, true).unwrap();

    let mut pde = p.clone();
    pde.colloc.boundary.clear();
    pde.colloc.initial.clear();
    pde.weights.boundary = vec![1.0];
    let mut bc = p.clone();
    bc.weights = LossWeights { boundary: p.weights.boundary.clone(), initial: 0.0 };
    let mut ic = p.clone();
    ic.weights = LossWeights { boundary: vec![0.0], initial: p.weights.initial };
    let g_pde = evaluate(&m, &pde, true).unwrap().grad.unwrap();
    // bc/ic parts: subtract the shared PDE part
    let g_bc = evaluate(&m, &bc, true).unwrap().grad.unwrap();
    let g_ic = evaluate(&m, &ic, true).unwrap().grad.unwrap();
    let g = full.grad.unwrap();
    for i in 0..g.len() {
        let sum = g_bc[i] + g_ic[i] - g_pde[i];
        assert!((g[i] - sum).abs() < 1e-12 * (1.0 + g[i].abs()), "{i}: {} vs {sum}", g[i]);
    }
}

#[test]
fn zero_residual_model_has_zero_pde_gradient() {
    let domain = Domain::interval_1d();
    let m = random_model(Variant::FnnTeQpinn, 2, 2, &domain, 21);
    let mut p = small_problem(domain, 21);
    p.colloc.boundary.clear();
    p.colloc.initial.clear();
    let me = m.clone();
    let beta = p.beta;
    p.sources = Sources::manufactured(beta, move |q| {
        let (j, _) = me.jet(q, Order::Second).unwrap();
        qpinn::physics::PointFields::from(&j)
    });
    let (lb, g) = loss_grad(&m, &p).unwrap();
    assert!(lb.l_pde < 1e-28);
    assert!(g.iter().all(|v| v.abs() < 1e-14), "{g:?}");
}

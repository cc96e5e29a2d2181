mod common;

use qlwave::harness::{energy_identity_experiment, random_pair, run_trajectory, RunConfig};
use qlwave::integrators::{compose_trajectory_via_splitting, MethodName};
use qlwave::problem::{builtin_problem, DiscreteNonlinearity, GAUCKLER_TEST, LINEAR};
use qlwave::{builtin_method, discretize_initial_data, eval_fhat_k, Integrator, NonlinearityWorkspace, PairState};

use common::{custom_problem, fhat_oracle, relative_l2, relative_pair};

#[test]
fn nonlinearity_matches_quadrature_oracle() {
    let mut rng = common::rng(7);
    let problems = [
        builtin_problem(GAUCKLER_TEST, 0.01).unwrap(),
        builtin_problem(LINEAR, 0.01).unwrap(),
        custom_problem(0.01),
    ];
    for i in 0..50 {
        let k = 1 + (i * 7) % 16;
        let u = common::random_field(&mut rng, k, 2.0);
        for p in &problems {
            let mut ws = NonlinearityWorkspace::new(k);
            let got = eval_fhat_k(&u, p, &mut ws).unwrap();
            let want = fhat_oracle(&u, p);
            let err = relative_l2(&got, &want);
            assert!(err <= 1e-10, "{} K={k}: {err}", p.name);
            assert!(got.is_hermitian(1e-12));
        }
    }
}

#[test]
fn oracle_reproduces_known_coefficients() {
    // a(u) = u on u = 2cos x: I(a) ∂²u = -4cos²x = -2 - 2cos 2x.
    let p = qlwave::ProblemSpec::custom_polynomial(
        1.0,
        qlwave::problem::Polynomial(vec![0.0, 1.0]),
        qlwave::problem::BivariatePolynomial(vec![]),
        None,
    )
    .unwrap();
    let u = qlwave::SpectralField::from_modes(3, &[(1, 1.0.into()), (-1, 1.0.into())]);
    let f = fhat_oracle(&u, &p);
    assert!((f.coeff(0).re + 2.0).abs() < 1e-13);
    assert!((f.coeff(2).re + 1.0).abs() < 1e-13);
    assert!(f.coeff(1).norm() < 1e-13);
}

#[test]
fn ti2_trajectory_matches_splitting() {
    let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
    let h = 2f64.powi(-6);
    let rec = run_trajectory(&RunConfig::new(MethodName::TI2, 8, h, 0.5, p.clone())).unwrap();
    let init = discretize_initial_data(&p, 8);
    let mut rhs = DiscreteNonlinearity::new(&p, 8);
    let split = compose_trajectory_via_splitting(&init, h, 32, &builtin_method(MethodName::TI2), &mut rhs, 0.01).unwrap();
    assert!(relative_pair(&rec.final_state, &split) <= 1e-10);
}

#[test]
fn splitting_from_random_states() {
    let p = custom_problem(0.05);
    let m = builtin_method(MethodName::TI2);
    for seed in 0..5 {
        let k = 8;
        let s0 = random_pair(k, seed);
        let integ = Integrator::new(m, 0.1, 0.05, k).unwrap();
        let mut rhs = DiscreteNonlinearity::new(&p, k);
        let mut st = s0.clone();
        for n in 1..=8 {
            st = integ.step(&st, &mut rhs).unwrap();
            let split = compose_trajectory_via_splitting(&s0, 0.1, n, &m, &mut rhs, 0.05).unwrap();
            assert!(relative_pair(&st, &split) <= 1e-10, "seed {seed} n {n}");
        }
    }
}

#[test]
fn every_symmetric_method_factors_as_splitting() {
    let p = builtin_problem(GAUCKLER_TEST, 0.1).unwrap();
    for name in [MethodName::TI1, MethodName::TI3] {
        let m = builtin_method(name);
        let s0 = random_pair(8, 3);
        let mut rhs = DiscreteNonlinearity::new(&p, 8);
        let integ = Integrator::new(m, 0.5, 0.1, 8).unwrap();
        let mut st = s0.clone();
        for _ in 0..4 {
            st = integ.step(&st, &mut rhs).unwrap();
        }
        let split = compose_trajectory_via_splitting(&s0, 0.5, 4, &m, &mut rhs, 0.1).unwrap();
        assert!(relative_pair(&st, &split) <= 1e-10, "{name}");
    }
}

#[test]
fn nti_differs_from_ti2() {
    let p = builtin_problem(GAUCKLER_TEST, 0.1).unwrap();
    let s0 = random_pair(8, 3);
    let mut rhs = DiscreteNonlinearity::new(&p, 8);
    let a = Integrator::new(builtin_method(MethodName::TI2), 0.5, 0.1, 8).unwrap().step(&s0, &mut rhs).unwrap();
    let b = Integrator::new(builtin_method(MethodName::NTI), 0.5, 0.1, 8).unwrap().step(&s0, &mut rhs).unwrap();
    assert!(relative_pair(&a, &b) > 1e-8);
}

#[test]
fn time_reversal_over_trajectories() {
    let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
    for m in [MethodName::TI1, MethodName::TI2, MethodName::TI3] {
        let k = 16;
        let h = 2f64.powi(-4);
        let fwd = Integrator::new(builtin_method(m), h, 0.01, k).unwrap();
        let bwd = Integrator::new(builtin_method(m), -h, 0.01, k).unwrap();
        let mut rhs = DiscreteNonlinearity::new(&p, k);
        let s0 = discretize_initial_data(&p, k);
        let mut st = s0.clone();
        for _ in 0..16 {
            st = fwd.step(&st, &mut rhs).unwrap();
        }
        for _ in 0..16 {
            st = bwd.step(&st, &mut rhs).unwrap();
        }
        assert!(relative_pair(&st, &s0) <= 1e-10, "{m}");
    }
}

#[test]
fn energy_identity_holds_for_custom_problem() {
    let p = custom_problem(0.05);
    for m in [MethodName::TI1, MethodName::TI2, MethodName::TI3] {
        let cfg = RunConfig::new(m, 12, 0.125, 1.0, p.clone());
        let rep = energy_identity_experiment(&cfg, 1e-2, 3).unwrap();
        assert!(rep.max_relative_residual <= 1e-10, "{m}: {}", rep.max_relative_residual);
    }
}

#[test]
fn kappa_zero_matches_linear_flow_for_random_states() {
    let p = builtin_problem(GAUCKLER_TEST, 0.0).unwrap();
    for m in MethodName::ALL {
        let s0: PairState = random_pair(10, 17);
        let integ = Integrator::new(builtin_method(m), 0.73, 0.0, 10).unwrap();
        let mut rhs = DiscreteNonlinearity::new(&p, 10);
        let mut st = s0.clone();
        for _ in 0..100 {
            st = integ.step(&st, &mut rhs).unwrap();
        }
        let exact = qlwave::integrators::linear_flow(&s0, 73.0);
        assert!(relative_pair(&st, &exact) <= 1e-12, "{m}");
    }
}

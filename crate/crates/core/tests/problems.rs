mod common;

use std::collections::BTreeMap;

use common::rng;
use expfilter::classic::{ClassicScheme, ClassicStepper};
use expfilter::problems::{burgers, logistic, reaction_diffusion, REGISTRY};
use expfilter::ssm::fd_jacobian;
use expfilter::{Ivp, Problem};
use nalgebra::DVector;
use rand::Rng;

fn registered() -> Vec<Problem> {
    let mut params = BTreeMap::new();
    let mut out = vec![];
    for (name, _, _) in REGISTRY {
        out.push(Problem::from_name(name, &params, false).unwrap());
    }
    params.insert("K".to_string(), 1e4);
    out.push(Problem::from_name("logistic", &params, false).unwrap());
    params.clear();
    params.insert("N".to_string(), 7.0);
    out.push(Problem::from_name("burgers", &params, false).unwrap());
    out.push(Problem::from_name("reaction-diffusion", &params, false).unwrap());
    out
}

#[test]
fn split_is_consistent_at_random_points() {
    let mut rng = rng(11);
    for p in registered() {
        let l = p
            .linear_part()
            .expect("every registered problem is semi-linear");
        for _ in 0..100 {
            let y = DVector::from_fn(p.dim(), |_, _| rng.random_range(-2.0..2.0));
            let t = rng.random_range(p.time_span().0..p.time_span().1);
            let f = p.rhs(&y, t);
            let split = l * &y + p.nonlinear(&y, t).unwrap();
            assert!(
                (&f - split).norm() <= 1e-12 * (1.0 + f.norm()),
                "{}",
                p.name()
            );
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = rng(12);
    for p in registered() {
        for _ in 0..100 {
            let y = DVector::from_fn(p.dim(), |_, _| rng.random_range(-2.0..2.0));
            let t = rng.random_range(p.time_span().0..p.time_span().1);
            let exact = p.jacobian(&y, t).unwrap();
            let fd = fd_jacobian(&p, &y, t);
            let err = (&exact - &fd).norm() / (1.0 + exact.norm());
            assert!(err <= 1e-6, "{} err={err:e}", p.name());
        }
    }
}

#[test]
fn registry_rejects_bad_input() {
    let none = BTreeMap::new();
    assert!(Problem::from_name("lorenz", &none, false).is_err());
    let mut params = BTreeMap::new();
    params.insert("K".to_string(), 0.0);
    assert!(Problem::from_name("logistic", &params, false).is_err());
    params.clear();
    params.insert("N".to_string(), 2.5);
    assert!(Problem::from_name("burgers", &params, false).is_err());
    params.clear();
    params.insert("speed".to_string(), 1.0);
    assert!(Problem::from_name("burgers", &params, false).is_err());
    assert_eq!(
        Problem::from_name("burgers", &none, true).unwrap().dim(),
        250
    );
    assert_eq!(
        Problem::from_name("reaction-diffusion", &none, true)
            .unwrap()
            .dim(),
        100
    );
}

#[test]
fn logistic_closed_form_solves_the_equation() {
    for k in [10.0, 1e2, 1e4] {
        let p = logistic(k).unwrap();
        assert_eq!(p.exact_solution(0.0).unwrap()[0], 1.0);
        for t in [0.3, 1.0, 4.0, 9.5] {
            let dt = 1e-5;
            let y = p.exact_solution(t).unwrap();
            let dy = (p.exact_solution(t + dt).unwrap() - p.exact_solution(t - dt).unwrap())
                / (2.0 * dt);
            let f = p.rhs(&y, t);
            assert!((dy - f).norm() <= 1e-8, "K={k} t={t}");
        }
        let stepper =
            ClassicStepper::new(ClassicScheme::ExponentialTrapezoidalPec, &p, 1e-3).unwrap();
        let traj = stepper.integrate(10_000);
        let exact = p.exact_solution(10.0).unwrap()[0];
        assert!((traj.values[10_000][0] - exact).abs() <= 1e-8 * (1.0 + exact.abs()));
    }
}

#[test]
fn burgers_energy_decays_after_transient() {
    let p = burgers(50, 0.075).unwrap();
    let h = 1e-4;
    let stepper = ClassicStepper::new(ClassicScheme::ExponentialTrapezoidalPec, &p, h).unwrap();
    let traj = stepper.integrate(10_000);
    let norms: Vec<f64> = traj.values.iter().step_by(100).map(|y| y.norm()).collect();
    // Skip the first 0.1 time units.
    for w in norms[10..].windows(2) {
        assert!(w[1] <= 1.01 * w[0], "{norms:?}");
    }
    assert!(norms.last().unwrap() < &norms[10]);
}

#[test]
fn reaction_diffusion_stays_in_unit_box() {
    let p = reaction_diffusion(25, 0.25).unwrap();
    let stepper = ClassicStepper::new(ClassicScheme::ExponentialTrapezoidalPec, &p, 1e-4).unwrap();
    let traj = stepper.integrate(20_000);
    for y in traj.values.iter().step_by(50) {
        assert!(y.iter().all(|&u| (-1e-6..=1.0 + 1e-6).contains(&u)));
    }
}

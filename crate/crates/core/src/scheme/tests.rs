use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::grid::SpatialGrid;
use crate::manufactured::manufacture;
use crate::problem::tests::one_d;
use crate::problem::{CoefficientField, ControlCoefficients, ControlSet, ScalarField};
use crate::smooth::{SineWave, SmoothFunction};
use crate::stencil::Kushner;

fn scheme(problem: HJBProblem, nx: usize, nt: usize, theta: f64) -> ThetaScheme {
    let space = SpatialGrid::new(1, nx, 2.0 * PI).unwrap();
    let grid = SpaceTimeGrid::new(space, problem.horizon(), nt).unwrap();
    ThetaScheme::new(problem, grid, theta, Arc::new(Kushner)).unwrap()
}

fn heat() -> HJBProblem {
    one_d(
        vec![ControlCoefficients::scalar(1.0, 0.0, 0.0, 0.0)],
        Arc::new(|x| x[0].sin()),
    )
}

fn zero_init() -> crate::problem::InitialData {
    Arc::new(|_| 0.0)
}

#[test]
fn cfl_implicit_with_nonpositive_discount() {
    let p = one_d(
        vec![
            ControlCoefficients::scalar(1.0, 0.5, -0.3, 0.0),
            ControlCoefficients::scalar(0.2, 0.0, 0.0, 1.0),
        ],
        zero_init(),
    );
    let r = scheme(p, 32, 4, 1.0).cfl_check().unwrap();
    assert!(r.ok);
    assert_eq!(r.explicit, 0.0);
    assert!(r.implicit <= 0.0);
}

#[test]
fn cfl_explicit_heat_margins() {
    // a = sigma^2/2 = 1 so sum C = 2/dx^2; dx = 0.1 on a unit torus
    let p = HJBProblem::new(
        1,
        ControlSet::numbered(1).unwrap(),
        CoefficientField::new(
            vec![ControlCoefficients::scalar(2f64.sqrt(), 0.0, 0.0, 0.0)],
            false,
        ),
        zero_init(),
        1.0,
        vec![1.0],
    )
    .unwrap();
    let space = SpatialGrid::new(1, 10, 1.0).unwrap();
    let at = |dt: f64| {
        let grid = SpaceTimeGrid::new(space, dt * 10.0, 10).unwrap();
        ThetaScheme::new(p.clone(), grid, 0.0, Arc::new(Kushner))
            .unwrap()
            .cfl_check()
            .unwrap()
    };
    let ok = at(0.005);
    assert!(ok.ok);
    assert!((ok.explicit - 1.0).abs() < 1e-9);
    let broken = at(0.02);
    assert!(!broken.ok);
    assert!((broken.explicit - 4.0).abs() < 1e-9);
}

#[test]
fn explicit_step_constant_source() {
    let p = one_d(
        vec![ControlCoefficients::scalar(0.0, 0.0, 0.0, 1.0)],
        zero_init(),
    );
    let s = scheme(p, 16, 10, 0.0);
    let (u, r) = s.explicit_step(&s.initial(), 1).unwrap();
    assert!(u.values().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    assert_eq!(r.argmax, vec![0; 16]);
}

#[test]
fn explicit_step_zero_control_dominates() {
    let p = one_d(
        vec![
            ControlCoefficients::scalar(0.0, 0.0, 0.0, 0.0),
            ControlCoefficients::scalar(0.0, 0.0, 0.0, 2.0),
        ],
        zero_init(),
    );
    let s = scheme(p, 16, 10, 0.0);
    let (u, r) = s.explicit_step(&s.initial(), 1).unwrap();
    assert!(u.values().iter().all(|&v| v == 0.0));
    assert!(r.argmax.iter().all(|&k| k == 0));
}

#[test]
fn explicit_heat_step_matches_forward_euler() {
    let s = scheme(heat(), 32, 400, 0.0);
    let u0 = s.initial();
    let (u, _) = s.explicit_step(&u0, 1).unwrap();
    let (dx, dt, v) = (s.grid().space.dx(), s.grid().dt(), u0.values());
    for i in 0..32 {
        let lap = (v[(i + 1) % 32] - 2.0 * v[i] + v[(i + 31) % 32]) / (dx * dx);
        assert!((u.get(i) - (v[i] + dt * 0.5 * lap)).abs() < 1e-15);
    }
}

#[test]
fn implicit_single_control_needs_one_policy_step() {
    let s = scheme(heat(), 32, 10, 1.0);
    let (_, r) = s.implicit_step(&s.initial(), 1).unwrap();
    assert_eq!(r.policy_iterations, 1);
    assert!(r.residual <= 1e-10);
}

#[test]
fn implicit_constant_source() {
    let p = one_d(
        vec![ControlCoefficients::scalar(0.0, 0.0, 0.0, 1.0)],
        Arc::new(|x| x[0].cos()),
    );
    let s = scheme(p, 16, 10, 1.0);
    let u0 = s.initial();
    let (u, _) = s.implicit_step(&u0, 1).unwrap();
    for i in 0..16 {
        assert_eq!(u.get(i), u0.get(i) + 0.1);
    }
}

#[test]
fn step_kinds_are_guarded() {
    assert!(scheme(heat(), 16, 10, 0.5)
        .explicit_step(
            &GridFunction::zeros(SpatialGrid::new(1, 16, 2.0 * PI).unwrap()),
            1
        )
        .is_err());
    let s = scheme(heat(), 16, 10, 0.0);
    assert!(s.implicit_step(&s.initial(), 1).is_err());
    assert!(ThetaScheme::new(heat(), *s.grid(), 1.5, Arc::new(Kushner)).is_err());
}

fn two_control_manufactured() -> HJBProblem {
    manufacture(
        ControlSet::numbered(2).unwrap(),
        vec![
            ControlCoefficients::scalar(1.0, 0.5, 0.0, 0.0),
            ControlCoefficients::scalar(0.5, -0.5, 0.0, 0.0),
        ],
        vec![
            Arc::new(|_, x: &[f64]| 0.5 * x[0].sin().max(0.0)) as ScalarField,
            Arc::new(|_, x: &[f64]| 0.5 * (-x[0].sin()).max(0.0)),
        ],
        Arc::new(SineWave::new(1.0, 0.5, vec![1.0], 0.0)),
        1.0,
        vec![2.0 * PI],
    )
    .unwrap()
    .base
}

#[test]
fn implicit_and_explicit_steps_agree_to_second_order() {
    // Richardson oracle: the two one-step maps differ by O(dt^2) on fixed data
    let p = two_control_manufactured();
    let gap = |nt: usize| {
        let e = scheme(p.clone(), 32, nt, 0.0);
        let i = scheme(p.clone(), 32, nt, 1.0);
        let u0 = e.initial();
        let (a, _) = e.step(&u0, 1).unwrap();
        let (b, _) = i.step(&u0, 1).unwrap();
        a.zip_with(&b, |x, y| x - y).unwrap().sup_norm()
    };
    let ratio = gap(4000) / gap(8000);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn zero_data_stays_zero() {
    let p = one_d(
        vec![ControlCoefficients::scalar(1.0, 0.3, -0.2, 0.0)],
        zero_init(),
    );
    for theta in [0.0, 0.5, 1.0] {
        let traj = scheme(p.clone(), 16, 20, theta).solve().unwrap();
        assert!(traj.levels.iter().all(|u| u.sup_norm() == 0.0));
        assert_eq!(traj.levels.len(), 21);
    }
}

#[test]
fn heat_error_decreases_under_refinement() {
    let err = |nx: usize| {
        let dx = 2.0 * PI / nx as f64;
        let nt = (1.0 / dx).ceil() as usize;
        let traj = scheme(heat(), nx, nt, 1.0).solve().unwrap();
        let exact = GridFunction::from_fn(traj.grid.space, |x| (-0.5f64).exp() * x[0].sin());
        traj.final_level()
            .zip_with(&exact, |a, b| a - b)
            .unwrap()
            .sup_norm()
    };
    let (e32, e64) = (err(32), err(64));
    assert!(e64 < e32);
    assert!(e32 < 0.1);
}

#[test]
fn manufactured_error_decreases_under_refinement() {
    let p = two_control_manufactured();
    let exact = SineWave::new(1.0, 0.5, vec![1.0], 0.0);
    let err = |nx: usize| {
        let dx = 2.0 * PI / nx as f64;
        let traj = scheme(p.clone(), nx, (1.0 / dx).ceil() as usize, 1.0)
            .solve()
            .unwrap();
        let e = GridFunction::from_fn(traj.grid.space, |x| exact.value(1.0, x));
        traj.final_level()
            .zip_with(&e, |a, b| a - b)
            .unwrap()
            .sup_norm()
    };
    assert!(err(64) < err(32));
}

#[test]
fn cfl_violation_stops_solve_unless_forced() {
    let space = SpatialGrid::new(1, 32, 2.0 * PI).unwrap();
    let dx = space.dx();
    let grid = SpaceTimeGrid::new(space, 40.0 * dx * dx, 10).unwrap();
    let s = ThetaScheme::new(heat(), grid, 0.0, Arc::new(Kushner)).unwrap();
    assert!(matches!(s.solve(), Err(Error::Cfl { .. })));
    assert!(s.solve_unchecked().is_ok());
}

#[test]
fn singular_diagonal_is_reported() {
    let p = one_d(
        vec![ControlCoefficients::scalar(0.0, 0.0, 100.0, 0.0)],
        Arc::new(|x| x[0].sin()),
    );
    let s = scheme(p, 16, 10, 1.0);
    assert!(matches!(
        s.implicit_step(&s.initial(), 1),
        Err(Error::SingularDiagonal { .. })
    ));
    assert!(matches!(s.solve(), Err(Error::Cfl { .. })));
}

#[test]
fn monotonicity_holds_under_cfl() {
    for theta in [0.0, 0.5, 1.0] {
        let nt = if theta == 1.0 { 10 } else { 400 };
        let s = scheme(heat(), 32, nt, theta);
        assert!(s.cfl_check().unwrap().ok);
        let r = s.monotonicity_probe(200, 11).unwrap();
        assert!(r.passed(), "theta {theta}: {:?}", r.violation);
    }
}

#[test]
fn monotonicity_probe_finds_violation_when_cfl_broken() {
    let space = SpatialGrid::new(1, 32, 2.0 * PI).unwrap();
    let dt = 4.0 * space.dx() * space.dx();
    let grid = SpaceTimeGrid::new(space, 10.0 * dt, 10).unwrap();
    let s = ThetaScheme::new(heat(), grid, 0.0, Arc::new(Kushner)).unwrap();
    let r = s.monotonicity_probe(1000, 3).unwrap();
    let w = r.violation.expect("violation");
    assert_eq!(w.trial, 0);
    assert!(w.lower > w.upper);
    assert_eq!(w.coords, space.coords(w.node));
}

#[test]
fn comparison_bound_examples() {
    let base = one_d(
        vec![
            ControlCoefficients::scalar(1.0, 0.3, 0.5, 0.0),
            ControlCoefficients::scalar(0.5, -0.2, 0.0, 0.3),
        ],
        Arc::new(|x| x[0].sin()),
    );
    let zero: ScalarField = Arc::new(|_, _| 0.0);
    let one: ScalarField = Arc::new(|_, _| 1.0);
    let run = |p: HJBProblem| scheme(p, 32, 40, 1.0).solve().unwrap();
    let s = scheme(base.clone(), 32, 40, 1.0);
    assert_eq!(
        s.comparison_constants().unwrap(),
        ComparisonConstants {
            lambda: 0.5,
            mu: 1.5
        }
    );

    let u = run(base.clone());
    let v = run(base.with_initial(Arc::new(|x| x[0].sin() + 0.25)));
    let r = s.comparison_bound_check(&u, &v, &zero, &zero).unwrap();
    assert!(r.passed && r.worst_excess <= 0.0);
    // reversed: u - v = 0.25 e^{0.5 t} at most, below 0.25 e^{mu t}
    let r = s.comparison_bound_check(&v, &u, &zero, &zero).unwrap();
    assert!(r.passed);
    assert!(r.bounds[40] > 0.25);

    let forced = run(base.with_forcing(one.clone(), false));
    let r = s.comparison_bound_check(&forced, &u, &one, &zero).unwrap();
    assert!(r.passed, "{r:?}");
    assert!((r.bounds[40] - 2.0 * 1.5f64.exp()).abs() < 1e-12);
    let r = s.comparison_bound_check(&u, &forced, &zero, &one).unwrap();
    assert!(r.passed);
}

#[test]
fn apriori_bound_examples() {
    let decay = scheme(heat(), 32, 40, 1.0);
    let traj = decay.solve().unwrap();
    let norms: Vec<f64> = traj.levels.iter().map(|u| u.sup_norm()).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    assert!(decay.apriori_bounds_check(&traj).unwrap().passed);

    let p = one_d(
        vec![ControlCoefficients::scalar(0.0, 0.0, 0.0, 1.0)],
        zero_init(),
    );
    let s = scheme(p, 16, 10, 0.5);
    let traj = s.solve().unwrap();
    for (n, u) in traj.levels.iter().enumerate() {
        assert!(u.sup_norm() <= traj.time(n) + 1e-14);
    }
    assert!(s.apriori_bounds_check(&traj).unwrap().passed);

    // explicit growth (1 + dt)^n stays below e^t
    let p = one_d(
        vec![ControlCoefficients::scalar(0.0, 0.0, 1.0, 0.0)],
        Arc::new(|_| 1.0),
    );
    let s = scheme(p, 16, 100, 0.0);
    let r = s.apriori_bounds_check(&s.solve().unwrap()).unwrap();
    assert!(r.passed);
    assert!(r.worst_ratio <= 1.0 / 1.05 + 1e-12);
}

#[test]
fn stationary_discrete_solution_is_fixed_for_every_theta() {
    // L_h sin = -a_h sin, so f = a_h sin makes sin an exact discrete fixed point
    let nx = 32;
    let dx = 2.0 * PI / nx as f64;
    let a = 0.5;
    let ah = a * 2.0 * (1.0 - dx.cos()) / (dx * dx);
    let source: ScalarField = Arc::new(move |_, x: &[f64]| ah * x[0].sin());
    let c = ControlCoefficients {
        source,
        ..ControlCoefficients::scalar(1.0, 0.0, 0.0, 0.0)
    };
    let p = one_d(vec![c], Arc::new(|x| x[0].sin()));
    let steps: Vec<GridFunction> = [0.0, 0.3, 0.5, 1.0]
        .iter()
        .map(|&theta| {
            let s = scheme(p.clone(), nx, 400, theta);
            s.step(&s.initial(), 1).unwrap().0
        })
        .collect();
    let u0 = scheme(p, nx, 400, 0.0).initial();
    for u in &steps {
        assert!(u.zip_with(&u0, |a, b| a - b).unwrap().sup_norm() < 1e-9);
    }
}

#[test]
fn common_source_shift_keeps_argmax() {
    let p = two_control_manufactured();
    let s = scheme(p.clone(), 32, 32, 1.0);
    let shifted = scheme(p.with_forcing(Arc::new(|_, _| 3.0), false), 32, 32, 1.0);
    let a = s.solve().unwrap();
    let b = shifted.solve().unwrap();
    for (ra, rb) in a.reports.iter().zip(&b.reports) {
        assert_eq!(ra.argmax, rb.argmax);
    }
}

#[test]
fn trajectory_csv_is_reproducible() {
    let p = two_control_manufactured();
    let write = || {
        let mut buf = Vec::new();
        scheme(p.clone(), 16, 8, 0.5)
            .solve()
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        buf
    };
    let first = write();
    assert_eq!(first, write());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("t,x_1,value\n0,0,0\n"));
    assert_eq!(text.lines().count(), 1 + 9 * 16);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_consistency(theta in 0.0f64..=1.0, f in -2.0f64..2.0, u0 in -1.0f64..1.0) {
        let p = one_d(
            vec![ControlCoefficients::scalar(0.0, 0.0, 0.0, f), ControlCoefficients::scalar(0.0, 0.0, 0.0, f)],
            Arc::new(move |_| u0),
        );
        let traj = scheme(p, 8, 10, theta).solve().unwrap();
        for (n, u) in traj.levels.iter().enumerate() {
            let expect = u0 + traj.time(n) * f;
            prop_assert!(u.values().iter().all(|&v| (v - expect).abs() < 1e-12));
        }
    }

    #[test]
    fn step_is_monotone_on_random_pairs(seed in 0u64..1000, theta in 0.0f64..=1.0) {
        let s = scheme(two_control_manufactured(), 16, 200, theta);
        prop_assert!(s.cfl_check().unwrap().ok);
        prop_assert!(s.monotonicity_probe(5, seed).unwrap().passed());
    }
}

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};

use super::*;
use crate::timescale::{Component, TimeScale};
use crate::GridFunction;

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn const_history(ts: &TimeScale, a: f64, b: f64, x: f64) -> GridFunction<DVector<f64>> {
    GridFunction::from_fn(ts, a, b, |_| v1(x)).unwrap()
}

fn scalar_linear(
    ts: &TimeScale,
    a: f64,
    b: f64,
    g: f64,
    p: f64,
    q: f64,
    lag: f64,
    x0: f64,
) -> LinearDelaySystem {
    LinearDelaySystem::new(
        const_history(ts, a, b, x0),
        g,
        vec![matrix_fn(move |_| DMatrix::from_element(1, 1, p))],
        vector_fn(move |_| v1(q)),
        vec![delay_fn(move |t| t - lag)],
    )
}

fn fib_ivp(gamma: f64) -> DelayIvp {
    let ts = TimeScale::integers(-1, 30).unwrap();
    DelayIvp::new(
        const_history(&ts, -1.0, 0.0, 1.0),
        gamma,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
        vec![delay_fn(|t| t - 1.0)],
    )
}

#[test]
fn window_formula() {
    let ts = TimeScale::interval(0.0, 1.0, 0.01).unwrap();
    let ivp = DelayIvp::new(
        const_history(&ts, 0.0, 0.0, 0.0),
        1.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
        vec![delay_fn(|t| t)],
    )
    .with_epsilon(0.5)
    .with_bound(2.0);
    let (delta, zeta) = existence_window(&ivp).unwrap();
    assert_eq!(delta, 0.25);
    assert_abs_diff_eq!(zeta, 0.25, epsilon = 1e-12);

    let wide = ivp.clone().with_epsilon(10.0);
    let (delta, zeta) = existence_window(&wide).unwrap();
    assert_eq!((delta, zeta), (1.0, 1.0));
}

#[test]
fn window_on_integers_stays_at_beta() {
    let ts = TimeScale::integers(0, 5).unwrap();
    let ivp = DelayIvp::new(
        const_history(&ts, 0.0, 0.0, 1.0),
        5.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
        vec![delay_fn(|t| t)],
    )
    .with_epsilon(0.5)
    .with_bound(2.0);
    assert_eq!(existence_window(&ivp).unwrap(), (0.25, 0.0));
    // one jump past ζ
    let sol = picard_solve(&ivp, &PicardOptions::default()).unwrap();
    assert_eq!(sol.end, 1.0);
    assert_eq!(sol.at(1.0).unwrap()[0], 2.0);
}

#[test]
fn doubling_on_integers() {
    let ts = TimeScale::integers(0, 5).unwrap();
    let ivp = DelayIvp::new(
        const_history(&ts, 0.0, 0.0, 1.0),
        5.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
        vec![delay_fn(|t| t)],
    );
    let sol = solve_by_steps(&ivp, &PicardOptions::default()).unwrap();
    assert_eq!(sol.at(3.0).unwrap()[0], 8.0);
    assert_eq!(sol.at(5.0).unwrap()[0], 32.0);
}

#[test]
fn fibonacci_delay() {
    let sol = solve_by_steps(&fib_ivp(5.0), &PicardOptions::default()).unwrap();
    let xs: Vec<f64> = sol.values.values().iter().map(|v| v[0]).collect();
    assert_eq!(xs, vec![1.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0]);
}

#[test]
fn beta_equals_gamma_returns_history() {
    let ts = TimeScale::integers(-1, 3).unwrap();
    let ivp = DelayIvp::new(
        GridFunction::from_fn(&ts, -1.0, 0.0, |t| v1(t + 7.0)).unwrap(),
        0.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
        vec![delay_fn(|t| t - 1.0)],
    );
    let sol = picard_solve(&ivp, &PicardOptions::default()).unwrap();
    assert_eq!(sol.values.values(), &[v1(6.0), v1(7.0)]);
    assert_eq!(sol.end, 0.0);
}

#[test]
fn iterate_bound_examples() {
    let z = TimeScale::integers(0, 10).unwrap();
    assert_eq!(
        iterate_error_bound(3.0, 0.5, 1, &z, 4.0, 0.0).unwrap(),
        12.0
    );
    assert_eq!(iterate_error_bound(1.0, 1.0, 2, &z, 4.0, 0.0).unwrap(), 6.0);
    for k in 1..5 {
        assert_eq!(iterate_error_bound(1.0, 2.0, k, &z, 3.0, 3.0).unwrap(), 0.0);
    }
    assert!(iterate_error_bound(1.0, 1.0, 1, &z, 1.0, 2.0).is_err());
}

#[test]
fn bounds_and_partitions() {
    let z = TimeScale::integers(0, 3).unwrap();
    let sys = scalar_linear(&z, 0.0, 0.0, 3.0, 2.0, 3.0, 0.0, 1.0);
    assert_eq!(estimate_bounds(&sys).unwrap(), (2.0, 3.0));
    assert_eq!(make_partition(&sys, 1.0).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);

    let two = LinearDelaySystem::new(
        const_history(&z, 0.0, 0.0, 1.0),
        3.0,
        vec![
            matrix_fn(|_| DMatrix::from_element(1, 1, 1.0)),
            matrix_fn(|_| DMatrix::from_element(1, 1, -2.0)),
        ],
        vector_fn(|_| v1(0.0)),
        vec![delay_fn(|t| t), delay_fn(|t| t)],
    );
    assert_eq!(estimate_bounds(&two).unwrap().0, 3.0);

    let z2 = TimeScale::integers(0, 2).unwrap();
    let hist = GridFunction::from_fn(&z2, 0.0, 0.0, |_| DVector::from_element(2, 1.0)).unwrap();
    let ident = LinearDelaySystem::new(
        hist,
        2.0,
        vec![matrix_fn(|_| DMatrix::identity(2, 2))],
        vector_fn(|_| DVector::from_element(2, 1.0)),
        vec![delay_fn(|t| t)],
    );
    assert_eq!(estimate_bounds(&ident).unwrap(), (1.0, 1.0));

    let r = TimeScale::interval(0.0, 1.0, 0.01).unwrap();
    let sys = scalar_linear(&r, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0);
    let part = make_partition(&sys, 1.0).unwrap();
    assert_eq!(part.len(), 3);
    assert_abs_diff_eq!(part[1], 0.5, epsilon = 1e-12);
    assert_eq!(make_partition(&sys, 0.25).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn global_linear_examples() {
    let z = TimeScale::integers(0, 10).unwrap();
    let sys = scalar_linear(&z, 0.0, 0.0, 10.0, 1.0, 0.0, 0.0, 1.0);
    let sol = solve_global(&sys, &PicardOptions::default()).unwrap();
    assert_eq!(sol.at(10.0).unwrap()[0], 1024.0);
    assert_eq!(sol.diagnostics.partition.len(), 11);

    let r = TimeScale::interval(0.0, 1.0, 1e-3).unwrap();
    let sys = scalar_linear(&r, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0);
    let sol = solve_global(&sys, &PicardOptions::default()).unwrap();
    assert_abs_diff_eq!(sol.at(1.0).unwrap()[0], std::f64::consts::E, epsilon = 1e-3);

    let sys = scalar_linear(&z, 0.0, 0.0, 10.0, -1.0, 0.0, 0.0, 1.0);
    let sol = solve_global(&sys, &PicardOptions::default()).unwrap();
    for t in 1..=10 {
        assert_eq!(sol.at(t as f64).unwrap()[0], 0.0);
    }
}

#[test]
fn global_nonlinear_examples() {
    let z = TimeScale::integers(0, 5).unwrap();
    let ivp = DelayIvp::new(
        const_history(&z, 0.0, 0.0, 0.0),
        5.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].map(f64::sin)),
        vec![delay_fn(|t| t)],
    );
    let env = GrowthEnvelope::new(vec![scalar_fn(|_| 0.0)], scalar_fn(|_| 1.0));
    let sol = solve_global_nonlinear(&ivp, &env, &PicardOptions::default()).unwrap();
    assert!(sol.values.values().iter().all(|v| v[0] == 0.0));

    let z = TimeScale::integers(0, 3).unwrap();
    let ivp = DelayIvp::new(
        const_history(&z, 0.0, 0.0, 1.0),
        3.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].map(|x| x / (1.0 + x * x))),
        vec![delay_fn(|t| t)],
    );
    let env = GrowthEnvelope::new(vec![scalar_fn(|_| 1.0)], scalar_fn(|_| 0.0));
    let sol = solve_global_nonlinear(&ivp, &env, &PicardOptions::default()).unwrap();
    assert_eq!(sol.at(1.0).unwrap()[0], 1.5);
    assert_eq!(sol.at(2.0).unwrap()[0], 1.5 + 1.5 / 3.25);

    let tight = GrowthEnvelope::new(vec![scalar_fn(|_| 0.1)], scalar_fn(|_| 0.0));
    assert!(matches!(
        solve_global_nonlinear(&ivp, &tight, &PicardOptions::default()),
        Err(SolveError::EnvelopeViolation { .. })
    ));
}

#[test]
fn linear_wrapped_as_nonlinear_agrees() {
    let ts = TimeScale::new(
        [
            Component::Interval(0.0, 1.0),
            Component::Point(1.5),
            Component::Interval(2.0, 3.0),
        ],
        0.01,
    )
    .unwrap();
    let sys = LinearDelaySystem::new(
        GridFunction::from_fn(&ts, 0.0, 0.5, |t| v1(1.0 + t)).unwrap(),
        3.0,
        vec![matrix_fn(|t| DMatrix::from_element(1, 1, -0.5 + 0.2 * t))],
        vector_fn(|t| v1(t.cos())),
        vec![delay_fn(|t| match t {
            t if t <= 1.0 => (t - 0.5).max(0.0),
            t if t < 2.5 => 1.0,
            t => t - 0.5,
        })],
    );
    let lin = solve_global(&sys, &PicardOptions::default()).unwrap();
    let env = GrowthEnvelope::new(
        vec![scalar_fn(|t| (-0.5f64 + 0.2 * t).abs())],
        scalar_fn(|t| t.cos().abs()),
    );
    let non = solve_global_nonlinear(&sys.as_nonlinear(), &env, &PicardOptions::default()).unwrap();
    for (a, b) in lin.values.values().iter().zip(non.values.values()) {
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
    }
}

#[test]
fn validation_errors() {
    let z = TimeScale::integers(-1, 5).unwrap();
    let bad = |delay: SharedDelay| {
        DelayIvp::new(
            const_history(&z, -1.0, 0.0, 1.0),
            5.0,
            rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
            vec![delay],
        )
    };
    let opts = PicardOptions::default();
    let err = picard_solve(&bad(delay_fn(|t| t + 1.0)), &opts).unwrap_err();
    assert!(matches!(err, SolveError::DelayAhead { delay: 1, .. }));
    assert!(err.is_validation());
    assert!(err.to_string().contains("tau1(t) <= t violated at t=0"));
    assert!(matches!(
        picard_solve(&bad(delay_fn(|t| t - 3.0)), &opts),
        Err(SolveError::DelayBeforeAlpha { .. })
    ));
    assert!(matches!(
        picard_solve(&bad(delay_fn(|t| t - 0.5)), &opts),
        Err(SolveError::DelayOffScale { .. })
    ));
}

#[test]
fn dense_window_too_small() {
    let ts = TimeScale::interval(0.0, 1.0, 0.1).unwrap();
    let ivp = DelayIvp::new(
        const_history(&ts, 0.0, 0.0, 1.0),
        1.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].clone()),
        vec![delay_fn(|t| t)],
    )
    .with_bound(100.0)
    .with_epsilon(1.0);
    assert!(matches!(
        picard_solve(&ivp, &PicardOptions::default()),
        Err(SolveError::WindowTooSmall { .. })
    ));
}

#[test]
fn certificate_and_log() {
    let z = TimeScale::integers(0, 8).unwrap();
    let ivp = DelayIvp::new(
        const_history(&z, 0.0, 0.0, 0.0),
        8.0,
        rhs_fn(|_, u: &[DVector<f64>]| u[0].map(|x| 0.1 * x.sin() + 0.05)),
        vec![delay_fn(|t| (t / 2.0).floor())],
    )
    .with_bound(0.15)
    .with_lipschitz(0.1)
    .with_epsilon(2.0);
    let (sol, log) = picard_solve_logged(&ivp, &PicardOptions::default()).unwrap();
    assert_eq!(sol.end, 8.0);
    assert_eq!(sol.diagnostics.bound_certified, Some(true));
    assert!(log.diffs.len() >= 2);
    assert_eq!(log.points.len(), 9);
}

#[test]
fn perturbed_start_converges_to_same_fixed_point() {
    let r = TimeScale::interval(0.0, 0.4, 0.01).unwrap();
    let ivp = DelayIvp::new(
        const_history(&r, 0.0, 0.0, 0.5),
        0.4,
        rhs_fn(|t, u: &[DVector<f64>]| u[0].map(|x| x.cos() + t)),
        vec![delay_fn(|t| t)],
    );
    let opts = PicardOptions::default();
    let a = picard_solve(&ivp, &opts).unwrap();
    let b = picard_solve_from(&ivp, &opts, |t| v1(0.5 + 0.3 * (10.0 * t).sin())).unwrap();
    assert_eq!(a.end, b.end);
    for (x, y) in a.values.values().iter().zip(b.values.values()) {
        assert_abs_diff_eq!(x[0], y[0], epsilon = 10.0 * opts.tol);
    }
}

use nalgebra::DVector;

use timescale_dde::config::{parse_config, ConfigError, Problem};
use timescale_dde::solver::{solve_by_steps, solve_global, solve_global_nonlinear, SolveError};

const LINEAR: &str = "\
# x^Δ(t) = 0.5 x(t - 1) + 1
[timescale]
integers = -1, 10

[problem]
kind = linear
alpha = -1
beta = 0
gamma = 10

[delays]
tau1 = t - 1

[history]
phi = 1 + t

[linear]
p1 = 0.5
q = 1
";

fn expect_err(text: &str) -> ConfigError {
    parse_config(text).expect_err("config should be rejected")
}

#[test]
fn linear_scalar_spec_is_valid_and_solves() {
    let spec = parse_config(LINEAR).unwrap();
    assert_eq!(spec.dim(), 1);
    assert_eq!(spec.interval(), (-1.0, 0.0, 10.0));
    let Problem::Linear(sys) = &spec.problem else {
        panic!("linear expected")
    };
    let sol = solve_global(sys, &spec.options).unwrap();
    let mut x = vec![0.0, 1.0];
    for _ in 0..10 {
        let k = x.len() - 1;
        x.push(x[k] + 0.5 * x[k - 1] + 1.0);
    }
    for (i, want) in x.iter().enumerate() {
        assert_eq!(sol.at(i as f64 - 1.0).unwrap()[0], *want);
    }
}

#[test]
fn delay_ahead_of_time_names_witness() {
    let err = expect_err(&LINEAR.replace("t - 1", "t + 1"));
    let msg = err.to_string();
    assert!(
        matches!(err, ConfigError::Validation(SolveError::DelayAhead { t, .. }) if t == 0.0),
        "{msg}"
    );
    assert!(msg.contains("tau1(t) <= t violated at t=0"), "{msg}");
}

#[test]
fn delay_reaching_before_alpha_is_rejected() {
    let err = expect_err(&LINEAR.replace("t - 1", "t - 2"));
    let msg = err.to_string();
    assert!(
        matches!(
            err,
            ConfigError::Validation(SolveError::DelayBeforeAlpha { .. })
        ),
        "{msg}"
    );
    assert!(msg.contains("alpha <= tau1(t) violated at t=0"), "{msg}");
}

#[test]
fn other_invariants_are_caught_at_parse_time() {
    let cases = [
        (LINEAR.replace("gamma = 10", "gamma = 11"), "off grid"),
        (LINEAR.replace("beta = 0", "beta = 0.5"), "off grid"),
        (LINEAR.replace("gamma = 10", "gamma = -1"), "ordering"),
        (LINEAR.replace("t - 1", "t - 0.5"), "off scale"),
        (LINEAR.replace("phi = 1 + t", "phi = log(t)"), "history"),
        (
            LINEAR.replace("p1 = 0.5", "p1 = 1 / (t - 3)"),
            "coefficient",
        ),
        (LINEAR.replace("q = 1", "q = sqrt(t - 5)"), "forcing"),
    ];
    for (text, what) in cases {
        let err = expect_err(&text);
        assert!(
            matches!(err, ConfigError::Validation(_) | ConfigError::TimeScale(_)),
            "{what}: {err}"
        );
    }
}

#[test]
fn parse_errors_carry_line_numbers() {
    let cases = [
        (LINEAR.replace("[delays]", "[delay]"), 11, "unknown section"),
        (LINEAR.replace("q = 1", "q = 1\nq = 2"), 20, "duplicate"),
        (LINEAR.replace("q = 1", "r = 1"), 19, "unknown key"),
        (
            LINEAR.replace("tau1 = t - 1", "tau1 t - 1"),
            12,
            "expected `key = value`",
        ),
        (LINEAR.replace("tau1", "tau2"), 12, "expected `tau1` next"),
    ];
    for (text, line, fragment) in cases {
        match expect_err(&text) {
            ConfigError::Parse { line: l, message } => {
                assert_eq!(l, line, "{message}");
                assert!(message.contains(fragment), "{message}");
            }
            other => panic!("expected a parse error for {fragment}, got {other}"),
        }
    }
    match expect_err(&LINEAR.replace("p1 = 0.5", "p1 = 2*^t")) {
        ConfigError::Expr { line, key, .. } => assert_eq!((line, key.as_str()), (18, "p1")),
        other => panic!("{other}"),
    }
    assert!(matches!(
        expect_err(&LINEAR.replace("kind = linear", "kind = affine")),
        ConfigError::Parse { .. }
    ));
    let missing = expect_err(&LINEAR.replace("gamma = 10\n", ""));
    assert_eq!(missing.to_string(), "missing `gamma` in [problem]");
    assert!(matches!(
        expect_err(&LINEAR.replace("p1 = 0.5\n", "")),
        ConfigError::Structure(_)
    ));
    assert!(matches!(
        expect_err(&LINEAR.replace("tau1 = t - 1\n", "")),
        ConfigError::Validation(SolveError::NoDelays)
    ));
}

#[test]
fn mixed_scale_matrix_system_with_history_table() {
    let text = "\
[timescale]
interval = 0, 1
point = 1.5
points = 2, 2.5
interval = 3, 4
dense_step = 0.01

[problem]
kind = linear
dim = 2
alpha = 0
beta = 0.02
gamma = 4

[delays]
tau1 = t
tau2 = max(0, t - 0.02)   # stays on the scale only on dense parts

[history]
value = 0, 1, 0
value = 0.01, 1, 0.01
value = 0.02, 1, 0.02

[linear]
p1 = 0, 1; -1, 0
p2 = 0.1, 0; 0, 0.1
q = 0, cos(t)
";
    let err = expect_err(text);
    assert!(
        matches!(
            err,
            ConfigError::Validation(SolveError::DelayOffScale { delay: 2, .. })
        ),
        "{err}"
    );

    let fixed = text.replace("max(0, t - 0.02)", "t");
    let spec = parse_config(&fixed).unwrap();
    assert_eq!(spec.dim(), 2);
    let Problem::Linear(sys) = &spec.problem else {
        panic!()
    };
    assert_eq!(sys.history.values()[1], DVector::from_vec(vec![1.0, 0.01]));
    solve_global(sys, &spec.options).unwrap();

    let missing = fixed.replace("value = 0.01, 1, 0.01\n", "");
    assert!(expect_err(&missing)
        .to_string()
        .contains("misses grid point"));
    let both = fixed.replace("[history]\n", "[history]\nphi = 1, 0\n");
    assert!(expect_err(&both).to_string().contains("not both"));
    let short_row = fixed.replace("p1 = 0, 1; -1, 0", "p1 = 0, 1; -1");
    assert!(expect_err(&short_row).to_string().contains("columns"));
}

const NONLINEAR: &str = "\
[timescale]
integers = -1, 12

[problem]
kind = nonlinear
alpha = -1
beta = 0
gamma = 12

[delays]
tau1 = t - 1
tau2 = t

[history]
phi = 0.1

[nonlinear]
f = 0.5 * sin(u1) + u2 / (1 + u2^2)

[solver]
tol = 1e-12
max_iter = 300
epsilon = 2
";

#[test]
fn nonlinear_spec_solves_by_steps_and_with_envelope() {
    let spec = parse_config(NONLINEAR).unwrap();
    let Problem::Nonlinear {
        ivp,
        envelope: None,
    } = &spec.problem
    else {
        panic!()
    };
    assert_eq!(ivp.epsilon, 2.0);
    assert_eq!(spec.options.tol, 1e-12);
    let sol = solve_by_steps(ivp, &spec.options).unwrap();
    let mut x = vec![0.1f64, 0.1];
    for _ in 0..12 {
        let k = x.len() - 1;
        let u = x[k];
        x.push(u + 0.5 * x[k - 1].sin() + u / (1.0 + u * u));
    }
    for (i, want) in x.iter().enumerate() {
        assert!((sol.at(i as f64 - 1.0).unwrap()[0] - want).abs() <= 1e-12);
    }

    let with_env = NONLINEAR.replace(
        "[solver]",
        "envelope_p1 = 0.5\nenvelope_p2 = 1\nenvelope_q = 0\n\n[solver]",
    );
    let spec = parse_config(&with_env).unwrap();
    let Problem::Nonlinear {
        ivp,
        envelope: Some(env),
    } = &spec.problem
    else {
        panic!()
    };
    let global = solve_global_nonlinear(ivp, env, &spec.options).unwrap();
    assert!((global.at(12.0).unwrap()[0] - x[13]).abs() <= 1e-12);

    let partial = NONLINEAR.replace("[solver]", "envelope_p1 = 0.5\nenvelope_q = 0\n\n[solver]");
    assert!(expect_err(&partial).to_string().contains("envelope"));
    let negative = with_env.replace("envelope_q = 0", "envelope_q = -1");
    assert!(matches!(
        expect_err(&negative),
        ConfigError::Validation(SolveError::Evaluation { .. })
    ));
}

#[test]
fn nonlinear_vector_variables_and_section_mixups() {
    let text = NONLINEAR
        .replace("kind = nonlinear", "kind = nonlinear\ndim = 2")
        .replace("phi = 0.1", "phi = 0.1, -0.1")
        .replace("f = 0.5 * sin(u1) + u2 / (1 + u2^2)", "f = u1_2, -u2_1");
    let spec = parse_config(&text).unwrap();
    let Problem::Nonlinear { ivp, .. } = &spec.problem else {
        panic!()
    };
    let sol = solve_by_steps(ivp, &spec.options).unwrap();
    assert_eq!(sol.at(1.0).unwrap(), &DVector::from_vec(vec![0.0, -0.2]));

    let scalar_names = text.replace("f = u1_2, -u2_1", "f = u1, u2");
    assert!(matches!(
        expect_err(&scalar_names),
        ConfigError::Expr { .. }
    ));
    let linear_keys = NONLINEAR.replace("[solver]", "[linear]\np1 = 1\n\n[solver]");
    assert!(expect_err(&linear_keys)
        .to_string()
        .contains("[linear] given"));
    let linear_opts = LINEAR.to_string() + "\n[solver]\nepsilon = 1\n";
    assert!(expect_err(&linear_opts)
        .to_string()
        .contains("nonlinear problems only"));
}

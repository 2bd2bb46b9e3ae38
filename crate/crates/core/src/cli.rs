//! The `tsdde` command line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 failed
//! verification.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::config::{parse_config, ConfigError, Problem, ProblemSpec};
use crate::gridfn::GridFunction;
use crate::solver::{solve_by_steps, solve_global, solve_global_nonlinear, SolveError};
use crate::timescale::Side;
use crate::vop::Representation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tsdde",
    version,
    about = "Delay dynamic equations on time scales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve on [alpha, gamma] and write t,x1..xd rows
    Solve {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Principal matrix solution X(t, zeta) of a linear problem, rows t,m11..mdd
    Principal {
        spec: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        zeta: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Variation-of-parameters representation of a linear problem on [beta, gamma]
    Represent {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the representation with the direct solution
    Verify {
        spec: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// sigma, rho, mu and point classes of every grid point
    Gridinfo {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let code = if e.is_validation() {
            EXIT_INVALID
        } else {
            EXIT_SOLVER
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<crate::timescale::TimeScaleError> for Failure {
    fn from(e: crate::timescale::TimeScaleError) -> Self {
        SolveError::from(e).into()
    }
}

fn invalid(message: String) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message,
    }
}

/// `%.17g`: 17 significant digits, shortest of fixed and exponent notation.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn header(first: &str, names: impl IntoIterator<Item = String>) -> String {
    let mut h = first.to_string();
    for n in names {
        h.push(',');
        h.push_str(&n);
    }
    h.push('\n');
    h
}

fn row(out: &mut String, cells: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&format_g17(c));
    }
    out.push('\n');
}

pub fn vector_csv(values: &GridFunction<DVector<f64>>) -> String {
    let d = values.values()[0].len();
    let mut out = header("t", (1..=d).map(|i| format!("x{i}")));
    for (t, v) in values.iter() {
        row(&mut out, std::iter::once(t).chain(v.iter().copied()));
    }
    out
}

pub fn matrix_csv(values: &GridFunction<DMatrix<f64>>) -> String {
    let d = values.values()[0].nrows();
    let names = (1..=d).flat_map(|i| (1..=d).map(move |j| format!("m{i}{j}")));
    let mut out = header("t", names);
    for (t, m) in values.iter() {
        let flat = (0..d).flat_map(|i| (0..d).map(move |j| m[(i, j)]));
        row(&mut out, std::iter::once(t).chain(flat));
    }
    out
}

fn side(s: Side) -> &'static str {
    match s {
        Side::Dense => "dense",
        Side::Scattered => "scattered",
        Side::Boundary => "boundary",
    }
}

fn gridinfo_csv(spec: &ProblemSpec) -> Result<String, Failure> {
    let ts = &spec.timescale;
    let mut out = String::from("t,sigma,rho,mu,left,right\n");
    for &t in ts.points() {
        let class = ts.classify(t)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_g17(t),
            format_g17(ts.sigma(t)?),
            format_g17(ts.rho(t)?),
            format_g17(ts.mu(t)?),
            side(class.left),
            side(class.right)
        );
    }
    Ok(out)
}

fn linear<'a>(
    spec: &'a ProblemSpec,
    command: &str,
) -> Result<&'a crate::solver::LinearDelaySystem, Failure> {
    match &spec.problem {
        Problem::Linear(sys) => Ok(sys),
        Problem::Nonlinear { .. } => Err(invalid(format!("`{command}` needs a linear problem"))),
    }
}

fn load(path: &PathBuf) -> Result<ProblemSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn emit(output: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    let result = match output {
        Some(path) => std::fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    };
    result.map_err(|e| Failure {
        code: EXIT_SOLVER,
        message: format!("cannot write output: {e}"),
    })
}

/// Text to write, where to write it, and a failure to report afterwards.
struct Output {
    path: Option<PathBuf>,
    text: String,
    after: Option<Failure>,
}

fn output(path: Option<PathBuf>, text: String) -> Output {
    Output {
        path,
        text,
        after: None,
    }
}

fn execute(command: Command) -> Result<Output, Failure> {
    Ok(match command {
        Command::Solve { spec, output: out } => {
            let spec = load(&spec)?;
            let solution = match &spec.problem {
                Problem::Linear(sys) => solve_global(sys, &spec.options)?,
                Problem::Nonlinear {
                    ivp,
                    envelope: Some(env),
                } => solve_global_nonlinear(ivp, env, &spec.options)?,
                Problem::Nonlinear {
                    ivp,
                    envelope: None,
                } => solve_by_steps(ivp, &spec.options)?,
            };
            output(out, vector_csv(&solution.values))
        }
        Command::Principal {
            spec,
            zeta,
            output: out,
        } => {
            let spec = load(&spec)?;
            let rep = Representation::new(linear(&spec, "principal")?, spec.options)?;
            output(out, matrix_csv(&rep.principal(zeta)?.values))
        }
        Command::Represent { spec, output: out } => {
            let spec = load(&spec)?;
            let rep = Representation::new(linear(&spec, "represent")?, spec.options)?;
            output(out, vector_csv(&rep.evaluate_all()?))
        }
        Command::Verify {
            spec,
            tol,
            output: out,
        } => {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(invalid(format!("--tol must be positive, got {tol}")));
            }
            let spec = load(&spec)?;
            let rep = Representation::new(linear(&spec, "verify")?, spec.options)?;
            let report = rep.verify(tol)?;
            let text = format!(
                "sup,argmax,tol,passed\n{},{},{},{}\n",
                format_g17(report.sup),
                format_g17(report.argmax),
                format_g17(report.tol),
                report.passed
            );
            let after = (!report.passed).then(|| Failure {
                code: EXIT_VERIFY,
                message: format!(
                    "representation differs from the solution by {} at t={} (tolerance {})",
                    report.sup, report.argmax, report.tol
                ),
            });
            Output {
                path: out,
                text,
                after,
            }
        }
        Command::Gridinfo { spec, output: out } => {
            let spec = load(&spec)?;
            output(out, gridinfo_csv(&spec)?)
        }
    })
}

/// Runs the CLI with explicit streams; `args` includes the program name.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    let result = pool.install(|| execute(cli.command)).and_then(|o| {
        emit(&o.path, &o.text, stdout)?;
        o.after.map_or(Ok(EXIT_OK), Err)
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = run_with(args, &mut out, &mut err);
    let _ = out.flush();
    code
}

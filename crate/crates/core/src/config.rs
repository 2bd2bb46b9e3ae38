//! Problem definition files.
//!
//! Line oriented: `[section]` headers, `key = value` entries, `#` comments.
//! Vector values separate components with `,`; matrix values separate rows
//! with `;`. See the README for the full grammar.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{parse_expression, Compiled, Expr, ExprError};
use crate::gridfn::GridFunction;
use crate::solver::{
    DelayIvp, Fallible, GrowthEnvelope, LinearDelaySystem, PicardOptions, SharedDelay,
    SharedMatrixFn, SharedRhs, SharedScalarFn, SharedVectorFn, SolveError,
};
use crate::timescale::{Component, TimeScale, TimeScaleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// A problem with the file as a whole, such as a missing entry.
    #[error("{0}")]
    Structure(String),
    #[error("line {line}: in `{key}`: {source}")]
    Expr {
        line: usize,
        key: String,
        source: ExprError,
    },
    #[error("invalid time scale: {0}")]
    TimeScale(#[from] TimeScaleError),
    #[error("invalid problem: {0}")]
    Validation(#[from] SolveError),
}

#[derive(Debug, Clone)]
pub enum Problem {
    Linear(LinearDelaySystem),
    Nonlinear {
        ivp: DelayIvp,
        envelope: Option<GrowthEnvelope>,
    },
}

/// A parsed and validated problem definition.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub timescale: TimeScale,
    pub problem: Problem,
    pub options: PicardOptions,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match &self.problem {
            Problem::Linear(s) => s.dim,
            Problem::Nonlinear { ivp, .. } => ivp.dim,
        }
    }

    /// `(α, β, γ)`
    pub fn interval(&self) -> (f64, f64, f64) {
        match &self.problem {
            Problem::Linear(s) => (s.alpha, s.beta, s.gamma),
            Problem::Nonlinear { ivp, .. } => (ivp.alpha, ivp.beta, ivp.gamma),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

#[derive(Debug, Default)]
struct Sections {
    map: HashMap<String, Vec<Entry>>,
}

const SECTIONS: [&str; 7] = [
    "timescale",
    "problem",
    "delays",
    "history",
    "linear",
    "nonlinear",
    "solver",
];
/// Keys that may repeat within their section.
const REPEATABLE: [&str; 4] = ["interval", "point", "points", "value"];

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

fn structure_err(message: impl Into<String>) -> ConfigError {
    ConfigError::Structure(message.into())
}

impl Sections {
    fn read(text: &str) -> Result<Self, ConfigError> {
        let mut out = Sections::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(parse_err(line, format!("unknown section [{name}]")));
                }
                if out.map.contains_key(name) {
                    return Err(parse_err(line, format!("section [{name}] appears twice")));
                }
                out.map.insert(name.to_string(), Vec::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(parse_err(line, format!("invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(parse_err(line, format!("`{key}` has no value")));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| parse_err(line, "entry before any section header"))?;
            let entries = out.map.get_mut(section).expect("section registered");
            if !REPEATABLE.contains(&key) {
                if let Some(prev) = entries.iter().find(|e| e.key == key) {
                    return Err(parse_err(
                        line,
                        format!("duplicate key `{key}` (first set on line {})", prev.line),
                    ));
                }
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: value.to_string(),
            });
        }
        Ok(out)
    }

    fn section(&self, name: &str) -> &[Entry] {
        self.map.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.section(section).iter().find(|e| e.key == key)
    }

    fn require(&self, section: &str, key: &str) -> Result<&Entry, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| structure_err(format!("missing `{key}` in [{section}]")))
    }

    /// Rejects keys of `section` not accepted by `known`.
    fn check_keys(&self, section: &str, known: impl Fn(&str) -> bool) -> Result<(), ConfigError> {
        match self.section(section).iter().find(|e| !known(&e.key)) {
            Some(e) => Err(parse_err(
                e.line,
                format!("unknown key `{}` in [{section}]", e.key),
            )),
            None => Ok(()),
        }
    }
}

/// Splits at `sep` outside parentheses.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn expr_of(e: &Entry, text: &str) -> Result<Expr, ConfigError> {
    parse_expression(text).map_err(|source| ConfigError::Expr {
        line: e.line,
        key: e.key.clone(),
        source,
    })
}

fn compile(e: &Entry, text: &str, names: &[&str]) -> Result<Compiled, ConfigError> {
    expr_of(e, text)?
        .compile(names)
        .map_err(|source| ConfigError::Expr {
            line: e.line,
            key: e.key.clone(),
            source,
        })
}

/// A constant expression.
fn number(e: &Entry, text: &str) -> Result<f64, ConfigError> {
    compile(e, text, &[])?
        .eval(&[])
        .map_err(|source| ConfigError::Expr {
            line: e.line,
            key: e.key.clone(),
            source,
        })
}

fn numbers(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    split_top(&e.value, ',')
        .into_iter()
        .map(|s| number(e, s))
        .collect()
}

fn count(e: &Entry, expected: usize, what: &str) -> Result<(), ConfigError> {
    let got = split_top(&e.value, ',').len();
    if got != expected {
        return Err(parse_err(
            e.line,
            format!("`{}` needs {expected} {what}, got {got}", e.key),
        ));
    }
    Ok(())
}

/// `d` component expressions in `t`.
fn vector_exprs(e: &Entry, d: usize) -> Result<Vec<Compiled>, ConfigError> {
    count(e, d, "components")?;
    split_top(&e.value, ',')
        .into_iter()
        .map(|s| compile(e, s, &["t"]))
        .collect()
}

/// `d x d` entries in `t`, rows separated by `;`.
fn matrix_exprs(e: &Entry, d: usize) -> Result<Vec<Compiled>, ConfigError> {
    let rows = split_top(&e.value, ';');
    if rows.len() != d {
        return Err(parse_err(
            e.line,
            format!("`{}` needs {d} rows, got {}", e.key, rows.len()),
        ));
    }
    let mut out = Vec::with_capacity(d * d);
    for row in rows {
        let cells = split_top(row, ',');
        if cells.len() != d {
            return Err(parse_err(
                e.line,
                format!("`{}` needs {d} columns per row, got {}", e.key, cells.len()),
            ));
        }
        for c in cells {
            out.push(compile(e, c, &["t"])?);
        }
    }
    Ok(out)
}

fn message(key: &str, err: ExprError) -> String {
    format!("{key}: {err}")
}

fn scalar_fn_of(key: String, c: Compiled) -> SharedScalarFn {
    Arc::new(Fallible(move |t: f64| {
        c.eval(&[t]).map_err(|e| message(&key, e))
    }))
}

fn vector_fn_of(key: String, cs: Vec<Compiled>) -> SharedVectorFn {
    Arc::new(Fallible(move |t: f64| {
        let v = cs
            .iter()
            .map(|c| c.eval(&[t]))
            .collect::<Result<Vec<_>, _>>();
        v.map(DVector::from_vec).map_err(|e| message(&key, e))
    }))
}

fn matrix_fn_of(key: String, d: usize, cs: Vec<Compiled>) -> SharedMatrixFn {
    Arc::new(Fallible(move |t: f64| {
        let v = cs
            .iter()
            .map(|c| c.eval(&[t]))
            .collect::<Result<Vec<_>, _>>();
        v.map(|v| DMatrix::from_row_slice(d, d, &v))
            .map_err(|e| message(&key, e))
    }))
}

/// Indexed keys `prefix1..prefixN` of a section, which must be contiguous.
fn indexed<'a>(entries: &'a [Entry], prefix: &str) -> Result<Vec<&'a Entry>, ConfigError> {
    let mut found: Vec<(usize, &Entry)> = entries
        .iter()
        .filter_map(|e| {
            let rest = e.key.strip_prefix(prefix)?;
            let i = rest.parse::<usize>().ok()?;
            (rest == i.to_string()).then_some((i, e))
        })
        .collect();
    found.sort_by_key(|(i, _)| *i);
    for (k, (i, e)) in found.iter().enumerate() {
        if *i != k + 1 {
            return Err(parse_err(
                e.line,
                format!("`{}`: expected `{prefix}{}` next", e.key, k + 1),
            ));
        }
    }
    Ok(found.into_iter().map(|(_, e)| e).collect())
}

fn is_indexed(key: &str, prefix: &str) -> bool {
    key.strip_prefix(prefix)
        .and_then(|r| r.parse::<usize>().ok().filter(|i| r == i.to_string()))
        .is_some_and(|i| i >= 1)
}

fn parse_timescale(s: &Sections) -> Result<TimeScale, ConfigError> {
    s.check_keys("timescale", |k| {
        matches!(
            k,
            "interval" | "point" | "points" | "integers" | "dense_step"
        )
    })?;
    let mut components = Vec::new();
    for e in s.section("timescale") {
        match e.key.as_str() {
            "interval" => {
                count(e, 2, "endpoints")?;
                let v = numbers(e)?;
                components.push(Component::Interval(v[0], v[1]));
            }
            "point" => {
                count(e, 1, "value")?;
                components.push(Component::Point(number(e, &e.value)?));
            }
            "points" => components.extend(numbers(e)?.into_iter().map(Component::Point)),
            "integers" => {
                count(e, 2, "bounds")?;
                let v = numbers(e)?;
                if v.iter().any(|x| x.fract() != 0.0) || v[0] > v[1] {
                    return Err(parse_err(
                        e.line,
                        "`integers` needs integer bounds lo <= hi",
                    ));
                }
                let (lo, hi) = (v[0] as i64, v[1] as i64);
                if hi - lo > 10_000_000 {
                    return Err(parse_err(e.line, "`integers` range too large"));
                }
                components.extend((lo..=hi).map(|k| Component::Point(k as f64)));
            }
            _ => {}
        }
    }
    if components.is_empty() {
        return Err(structure_err("[timescale] defines no points"));
    }
    let has_interval = components.iter().any(Component::is_interval);
    let step = match s.get("timescale", "dense_step") {
        Some(e) => number(e, &e.value)?,
        None if has_interval => return Err(structure_err("missing `dense_step` in [timescale]")),
        None => 1.0,
    };
    Ok(TimeScale::new(components, step)?)
}

fn usize_of(e: &Entry) -> Result<usize, ConfigError> {
    e.value
        .parse::<usize>()
        .map_err(|_| parse_err(e.line, format!("`{}` must be a nonnegative integer", e.key)))
}

fn parse_history(
    s: &Sections,
    ts: &TimeScale,
    alpha: f64,
    beta: f64,
    d: usize,
) -> Result<GridFunction<DVector<f64>>, ConfigError> {
    s.check_keys("history", |k| k == "phi" || k == "value")?;
    let rows: Vec<&Entry> = s
        .section("history")
        .iter()
        .filter(|e| e.key == "value")
        .collect();
    match (s.get("history", "phi"), rows.is_empty()) {
        (Some(e), true) => {
            let f = vector_fn_of("phi".into(), vector_exprs(e, d)?);
            let h = GridFunction::try_from_fn(ts, alpha, beta, |t| {
                f.eval(t).map_err(|message| SolveError::Evaluation {
                    what: "history".into(),
                    t,
                    message,
                })
            })?;
            Ok(h)
        }
        (None, false) => {
            let grid = ts.grid(alpha, beta)?;
            let mut values: Vec<Option<DVector<f64>>> = vec![None; grid.len()];
            for e in rows {
                count(e, d + 1, "numbers (t and the state)")?;
                let v = numbers(e)?;
                let i = grid
                    .iter()
                    .position(|&p| (p - v[0]).abs() <= 1e-9 * v[0].abs().max(1.0))
                    .ok_or_else(|| {
                        parse_err(
                            e.line,
                            format!(
                                "history point {} is not a grid point of [alpha, beta]",
                                v[0]
                            ),
                        )
                    })?;
                if values[i].is_some() {
                    return Err(parse_err(
                        e.line,
                        format!("history point {} given twice", v[0]),
                    ));
                }
                values[i] = Some(DVector::from_column_slice(&v[1..]));
            }
            let values = values
                .into_iter()
                .zip(&grid)
                .map(|(v, t)| {
                    v.ok_or_else(|| structure_err(format!("history table misses grid point {t}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GridFunction::new(ts, alpha, beta, values)?)
        }
        (Some(e), false) => Err(parse_err(
            e.line,
            "give either `phi` or `value` rows, not both",
        )),
        (None, true) => Err(structure_err("missing `phi` or `value` rows in [history]")),
    }
}

fn parse_options(s: &Sections) -> Result<(PicardOptions, [Option<f64>; 3]), ConfigError> {
    s.check_keys("solver", |k| {
        matches!(k, "tol" | "max_iter" | "epsilon" | "lipschitz" | "bound")
    })?;
    let mut opts = PicardOptions::default();
    if let Some(e) = s.get("solver", "tol") {
        opts.tol = number(e, &e.value)?;
    }
    if let Some(e) = s.get("solver", "max_iter") {
        opts.max_iter = usize_of(e)?;
    }
    opts.check()?;
    let get = |k: &str| s.get("solver", k).map(|e| number(e, &e.value)).transpose();
    Ok((opts, [get("epsilon")?, get("lipschitz")?, get("bound")?]))
}

/// Argument names of a nonlinear right-hand side: `t` and `u{i}` (`d = 1`) or `u{i}_{k}`.
pub fn rhs_variable_names(n: usize, d: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    for i in 1..=n {
        if d == 1 {
            names.push(format!("u{i}"));
        } else {
            names.extend((1..=d).map(|k| format!("u{i}_{k}")));
        }
    }
    names
}

pub fn parse_config(text: &str) -> Result<ProblemSpec, ConfigError> {
    let s = Sections::read(text)?;
    let timescale = parse_timescale(&s)?;

    s.check_keys("problem", |k| {
        matches!(k, "kind" | "dim" | "alpha" | "beta" | "gamma")
    })?;
    let kind = s.require("problem", "kind")?;
    let d = match s.get("problem", "dim") {
        Some(e) => usize_of(e)?,
        None => 1,
    };
    if d == 0 {
        return Err(parse_err(
            s.require("problem", "dim")?.line,
            "`dim` must be positive",
        ));
    }
    let point = |k: &str| -> Result<f64, ConfigError> {
        let e = s.require("problem", k)?;
        number(e, &e.value)
    };
    let (alpha, beta, gamma) = (point("alpha")?, point("beta")?, point("gamma")?);
    if !(alpha <= beta && beta <= gamma) {
        return Err(SolveError::Ordering { alpha, beta, gamma }.into());
    }
    for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
        if timescale.index_of(v).is_none() {
            return Err(SolveError::OffGrid { name, value: v }.into());
        }
    }

    s.check_keys("delays", |k| is_indexed(k, "tau"))?;
    let delays: Vec<SharedDelay> = indexed(s.section("delays"), "tau")?
        .into_iter()
        .map(|e| compile(e, &e.value, &["t"]).map(|c| scalar_fn_of(e.key.clone(), c)))
        .collect::<Result<_, _>>()?;
    if delays.is_empty() {
        return Err(SolveError::NoDelays.into());
    }
    let n = delays.len();
    let history = parse_history(&s, &timescale, alpha, beta, d)?;
    let (options, [epsilon, lipschitz, bound]) = parse_options(&s)?;

    let problem = match kind.value.as_str() {
        "linear" => {
            if !s.section("nonlinear").is_empty() {
                return Err(parse_err(
                    s.section("nonlinear")[0].line,
                    "[nonlinear] given for a linear problem",
                ));
            }
            s.check_keys("linear", |k| k == "q" || is_indexed(k, "p"))?;
            let ps = indexed(s.section("linear"), "p")?;
            if ps.len() != n {
                return Err(structure_err(format!(
                    "[linear] needs p1..p{n}, one per delay, got {}",
                    ps.len()
                )));
            }
            let coeffs = ps
                .into_iter()
                .map(|e| matrix_exprs(e, d).map(|cs| matrix_fn_of(e.key.clone(), d, cs)))
                .collect::<Result<Vec<_>, _>>()?;
            let forcing = match s.get("linear", "q") {
                Some(e) => vector_fn_of("q".into(), vector_exprs(e, d)?),
                None => Arc::new(move |_: f64| DVector::zeros(d)) as SharedVectorFn,
            };
            let sys = LinearDelaySystem::new(history, gamma, coeffs, forcing, delays);
            sys.validate()?;
            Problem::Linear(sys)
        }
        "nonlinear" => {
            if !s.section("linear").is_empty() {
                return Err(parse_err(
                    s.section("linear")[0].line,
                    "[linear] given for a nonlinear problem",
                ));
            }
            s.check_keys("nonlinear", |k| {
                k == "f" || k == "envelope_q" || is_indexed(k, "envelope_p")
            })?;
            let names = rhs_variable_names(n, d);
            let refs = names.iter().map(String::as_str).collect::<Vec<_>>();
            let e = s.require("nonlinear", "f")?;
            count(e, d, "components")?;
            let comps = split_top(&e.value, ',')
                .into_iter()
                .map(|c| compile(e, c, &refs))
                .collect::<Result<Vec<_>, _>>()?;
            let rhs: SharedRhs = Arc::new(Fallible(move |t: f64, u: &[DVector<f64>]| {
                let mut slots = Vec::with_capacity(1 + n * d);
                slots.push(t);
                for ui in u {
                    slots.extend(ui.iter());
                }
                comps
                    .iter()
                    .map(|c| c.eval(&slots))
                    .collect::<Result<Vec<_>, _>>()
                    .map(DVector::from_vec)
                    .map_err(|e| message("f", e))
            }));
            let env_p = indexed(s.section("nonlinear"), "envelope_p")?;
            let env_q = s.get("nonlinear", "envelope_q");
            let envelope = match (env_p.is_empty(), env_q) {
                (true, None) => None,
                (false, Some(q)) if env_p.len() == n => {
                    let p = env_p
                        .into_iter()
                        .map(|e| {
                            compile(e, &e.value, &["t"]).map(|c| scalar_fn_of(e.key.clone(), c))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let q = scalar_fn_of("envelope_q".into(), compile(q, &q.value, &["t"])?);
                    Some(GrowthEnvelope::new(p, q))
                }
                _ => {
                    return Err(structure_err(format!(
                        "a growth envelope needs envelope_p1..envelope_p{n} and envelope_q"
                    )))
                }
            };
            let mut ivp = DelayIvp::new(history, gamma, rhs, delays);
            ivp.epsilon = epsilon.unwrap_or(ivp.epsilon);
            ivp.lipschitz = lipschitz;
            ivp.bound = bound;
            ivp.validate()?;
            if let Some(env) = &envelope {
                check_envelope(&ivp, env)?;
            }
            Problem::Nonlinear { ivp, envelope }
        }
        other => {
            return Err(parse_err(
                kind.line,
                format!("`kind` must be `linear` or `nonlinear`, got `{other}`"),
            ))
        }
    };
    if matches!(problem, Problem::Linear(_))
        && (epsilon.is_some() || lipschitz.is_some() || bound.is_some())
    {
        let e = ["epsilon", "lipschitz", "bound"]
            .iter()
            .find_map(|k| s.get("solver", k))
            .expect("one is set");
        return Err(parse_err(
            e.line,
            format!("`{}` applies to nonlinear problems only", e.key),
        ));
    }
    Ok(ProblemSpec {
        timescale,
        problem,
        options,
    })
}

/// Envelope coefficients must be finite and nonnegative on the grid of `[β, γ]`.
fn check_envelope(ivp: &DelayIvp, env: &GrowthEnvelope) -> Result<(), ConfigError> {
    let grid = ivp.timescale.grid(ivp.beta, ivp.gamma)?;
    let named = env
        .p
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("envelope_p{}", i + 1), p))
        .chain(std::iter::once(("envelope_q".to_string(), &env.q)));
    for (what, f) in named {
        for &t in &grid {
            let v = f.eval(t).map_err(|message| SolveError::Evaluation {
                what: what.clone(),
                t,
                message,
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(SolveError::Evaluation {
                    what,
                    t,
                    message: format!(
                        "envelope coefficient must be finite and nonnegative, got {v}"
                    ),
                }
                .into());
            }
        }
    }
    Ok(())
}

//! Local existence window and successive approximations for nonlinear problems.

use nalgebra::DVector;

use super::global::initial_state;
use super::{
    DelayIvp, Diagnostics, Engine, IterSettings, Layout, NodeRhs, PicardOptions, SharedRhs,
    Solution, SolveError,
};
use crate::calculus::{hk_polynomial, CalculusError};
use crate::timescale::TimeScale;

/// Safety factor applied to a sampled bound on `‖f‖`.
const BOUND_SAFETY: f64 = 1.1;
/// History samples used when estimating `M`.
const HISTORY_SAMPLES: usize = 16;

/// A nonlinear right-hand side with shape, finiteness and optional envelope checks.
pub(crate) struct IvpRhs {
    rhs: SharedRhs,
    dim: usize,
    /// `(offset, p_i per node, q per node)`
    envelope: Option<(usize, Vec<Vec<f64>>, Vec<f64>)>,
}

impl IvpRhs {
    pub fn new(ivp: &DelayIvp) -> Self {
        Self {
            rhs: ivp.rhs.clone(),
            dim: ivp.dim,
            envelope: None,
        }
    }

    pub fn with_envelope(mut self, offset: usize, p: Vec<Vec<f64>>, q: Vec<f64>) -> Self {
        self.envelope = Some((offset, p, q));
        self
    }
}

impl NodeRhs<DVector<f64>> for IvpRhs {
    fn eval(&self, node: usize, t: f64, args: &[DVector<f64>]) -> Result<DVector<f64>, SolveError> {
        let v = self
            .rhs
            .eval(t, args)
            .map_err(|message| SolveError::Evaluation {
                what: "f".into(),
                t,
                message,
            })?;
        if v.len() != self.dim {
            return Err(SolveError::Shape {
                what: "f".into(),
                expected: (self.dim, 1),
                got: (v.len(), 1),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SolveError::Evaluation {
                what: "f".into(),
                t,
                message: "non-finite value".into(),
            });
        }
        if let Some((offset, p, q)) = &self.envelope {
            let k = node - offset;
            let envelope = p
                .iter()
                .zip(args)
                .map(|(pi, u)| pi[k] * u.amax())
                .sum::<f64>()
                + q[k];
            let norm = v.amax();
            if norm > envelope + 1e-9 * (1.0 + envelope) {
                return Err(SolveError::EnvelopeViolation { t, norm, envelope });
            }
        }
        Ok(v)
    }
}

/// Corners of the unit max-norm ball (all sign patterns for `d <= 4`,
/// otherwise `±e_k`), plus the centre.
fn ball_probes(d: usize) -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(d)];
    if d <= 4 {
        for mask in 0..(1usize << d) {
            out.push(DVector::from_fn(d, |i, _| {
                if mask >> i & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }));
        }
    } else {
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut e = DVector::zeros(d);
                e[i] = s;
                out.push(e);
            }
        }
    }
    out
}

/// Samples `‖f‖` at the nodes of `[start, γ]^κ` over `ε`-ball probes around
/// known values, all delayed arguments set alike, and pads by 10%.
fn estimate_bound(
    layout: &Layout,
    rhs: &IvpRhs,
    known: &[DVector<f64>],
    start: usize,
    eps: f64,
) -> Result<f64, SolveError> {
    let stride = known.len().div_ceil(HISTORY_SAMPLES).max(1);
    let mut centres = known.iter().step_by(stride).collect::<Vec<_>>();
    centres.push(&known[start]);
    let probes = ball_probes(layout.dim);
    let n = layout.delay_idx.len();
    let mut m = 0.0f64;
    for node in start..=layout.kappa_end() {
        let t = layout.points[node];
        for c in &centres {
            for p in &probes {
                let u = *c + p * eps;
                let args = vec![u; n];
                let v = rhs
                    .eval(node, t, &args)
                    .map_err(|_| SolveError::MissingBound)?;
                m = m.max(v.amax());
            }
        }
    }
    Ok(m * BOUND_SAFETY)
}

/// `δ = min{γ - t_start, ε/M}` and the node of `ζ = max [t_start, t_start + δ]`.
fn window(layout: &Layout, start: usize, eps: f64, m: f64) -> (f64, usize) {
    let span = layout.points[layout.gamma] - layout.points[start];
    let delta = if m > 0.0 { span.min(eps / m) } else { span };
    let zeta = layout.last_node_at_or_below(start, layout.gamma, layout.points[start] + delta);
    (delta, zeta)
}

fn bound_for(
    ivp: &DelayIvp,
    layout: &Layout,
    rhs: &IvpRhs,
    known: &[DVector<f64>],
    start: usize,
) -> Result<f64, SolveError> {
    match ivp.bound {
        Some(m) => Ok(m),
        None => estimate_bound(layout, rhs, known, start, ivp.epsilon),
    }
}

/// `(δ, ζ)` for one local Picard solve, estimating `M` when not supplied.
pub fn existence_window(ivp: &DelayIvp) -> Result<(f64, f64), SolveError> {
    let layout = ivp.layout()?;
    if layout.gamma == layout.beta {
        return Ok((0.0, ivp.beta));
    }
    let rhs = IvpRhs::new(ivp);
    let m = bound_for(ivp, &layout, &rhs, &layout.history, layout.beta)?;
    let (delta, zeta) = window(&layout, layout.beta, ivp.epsilon, m);
    Ok((delta, layout.points[zeta]))
}

/// Recorded differences `‖x_k - x_{k-1}‖` of a Picard run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateLog {
    /// Grid points of `[β, ζ]`.
    pub points: Vec<f64>,
    /// `diffs[k - 1][j]`: difference of iterates `k` and `k - 1` at `points[j]`.
    pub diffs: Vec<Vec<f64>>,
    /// The bound `M` used for the window.
    pub bound: f64,
}

struct LocalRun {
    solution: Solution,
    log: IterateLog,
}

fn local_run(
    ivp: &DelayIvp,
    opts: &PicardOptions,
    start_fn: Option<&dyn Fn(f64) -> DVector<f64>>,
    log: bool,
) -> Result<LocalRun, SolveError> {
    opts.check()?;
    let layout = ivp.layout()?;
    let b = layout.beta;
    let mut x = initial_state(&layout);
    if layout.gamma == b {
        return Ok(LocalRun {
            solution: Solution {
                values: layout.solution(x),
                end: ivp.beta,
                diagnostics: Diagnostics::default(),
            },
            log: IterateLog {
                points: vec![ivp.beta],
                diffs: vec![],
                bound: 0.0,
            },
        });
    }
    let rhs = IvpRhs::new(ivp);
    let engine = Engine::new(&layout, &rhs);
    let m = bound_for(ivp, &layout, &rhs, &layout.history, b)?;
    let (delta, zeta) = window(&layout, b, ivp.epsilon, m);
    if zeta == b && layout.dense[b] {
        return Err(SolveError::WindowTooSmall {
            beta: ivp.beta,
            delta,
        });
    }
    if let Some(f) = start_fn {
        for k in b + 1..=zeta {
            x[k] = f(layout.points[k]);
            if x[k].len() != layout.dim {
                return Err(SolveError::Shape {
                    what: "starting iterate".into(),
                    expected: (layout.dim, 1),
                    got: (x[k].len(), 1),
                });
            }
        }
    }
    let settings = IterSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
        epsilon: ivp.epsilon,
        certificate: ivp
            .lipschitz
            .map(|l| (m, layout.delay_idx.len() as f64 * l)),
        log,
    };
    let outcome = engine.iterate(&mut x, b, zeta, &settings)?;
    let mut end = zeta;
    if zeta < layout.gamma && !layout.dense[zeta] {
        engine.extend(&mut x, zeta)?;
        end = zeta + 1;
    }
    x.truncate(end + 1);
    let diagnostics = Diagnostics {
        iterations: outcome.iterations,
        final_sup_diff: outcome.sup_diff,
        window_delta: Some(delta),
        zeta: Some(layout.points[zeta]),
        partition: vec![ivp.beta, layout.points[end]],
        cells: vec![],
        bound_certified: outcome.certified,
    };
    Ok(LocalRun {
        log: IterateLog {
            points: layout.points[b..=zeta].to_vec(),
            diffs: outcome.log,
            bound: m,
        },
        solution: Solution {
            values: layout.solution(x),
            end: layout.points[end],
            diagnostics,
        },
    })
}

/// Fixed point of the integral operator on `[α, ζ]`, extended to `σ(ζ)` when
/// `ζ` is right-scattered. Iteration starts from `x_0 ≡ φ(β)`.
pub fn picard_solve(ivp: &DelayIvp, opts: &PicardOptions) -> Result<Solution, SolveError> {
    local_run(ivp, opts, None, false).map(|r| r.solution)
}

/// [`picard_solve`] keeping every iterate difference.
pub fn picard_solve_logged(
    ivp: &DelayIvp,
    opts: &PicardOptions,
) -> Result<(Solution, IterateLog), SolveError> {
    local_run(ivp, opts, None, true).map(|r| (r.solution, r.log))
}

/// [`picard_solve`] from another starting iterate on `(β, ζ]`.
pub fn picard_solve_from(
    ivp: &DelayIvp,
    opts: &PicardOptions,
    start: impl Fn(f64) -> DVector<f64>,
) -> Result<Solution, SolveError> {
    local_run(ivp, opts, Some(&start), false).map(|r| r.solution)
}

/// Local solver applied repeatedly up to `γ`, each solved piece joining the history.
pub fn solve_by_steps(ivp: &DelayIvp, opts: &PicardOptions) -> Result<Solution, SolveError> {
    opts.check()?;
    let layout = ivp.layout()?;
    let rhs = IvpRhs::new(ivp);
    let engine = Engine::new(&layout, &rhs);
    let mut x = initial_state(&layout);
    let mut diag = Diagnostics {
        partition: vec![ivp.beta],
        ..Diagnostics::default()
    };
    let settings = IterSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
        epsilon: ivp.epsilon,
        certificate: None,
        log: false,
    };
    let mut b = layout.beta;
    while b < layout.gamma {
        let m = bound_for(ivp, &layout, &rhs, &x[..=b], b)?;
        let (delta, zeta) = window(&layout, b, ivp.epsilon, m);
        let mut end = zeta;
        if zeta > b {
            let base = x[b].clone();
            for v in &mut x[b + 1..=zeta] {
                *v = base.clone();
            }
            let outcome = engine.iterate(&mut x, b, zeta, &settings)?;
            diag.iterations += outcome.iterations;
            diag.final_sup_diff = diag.final_sup_diff.max(outcome.sup_diff);
        } else if layout.dense[b] {
            return Err(SolveError::WindowTooSmall {
                beta: layout.points[b],
                delta,
            });
        }
        if zeta < layout.gamma && !layout.dense[zeta] {
            engine.extend(&mut x, zeta)?;
            end = zeta + 1;
        }
        diag.partition.push(layout.points[end]);
        b = end;
    }
    Ok(Solution {
        values: layout.solution(x),
        end: ivp.gamma,
        diagnostics: diag,
    })
}

/// `M L^{k-1} h_k(t, β)`.
pub fn iterate_error_bound(
    m: f64,
    l: f64,
    k: usize,
    ts: &TimeScale,
    t: f64,
    beta: f64,
) -> Result<f64, SolveError> {
    if k == 0 {
        return Err(SolveError::BadParameter {
            name: "k",
            value: 0.0,
        });
    }
    if t < beta {
        return Err(CalculusError::OutOfDomain(t).into());
    }
    Ok(m * l.powi(k as i32 - 1) * hk_polynomial(ts, k, t, beta)?)
}

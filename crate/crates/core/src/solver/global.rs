//! Method of steps over a partition adapted to the coefficient bound `M1`.

use nalgebra::{DMatrix, DVector};

use super::engine::IterOutcome;
use super::picard::IvpRhs;
use super::{
    CellReport, DelayIvp, Diagnostics, Engine, GrowthEnvelope, IterSettings, Layout,
    LinearDelaySystem, LinearTables, NodeRhs, PicardOptions, Solution, SolveError,
};
use crate::gridfn::GridValue;

/// Doublings of `ε_k` before giving up on reaching the cell end.
const MAX_DOUBLINGS: usize = 200;

/// `Σ p_i(t) u_i + q(t)` from sampled coefficient tables.
pub(crate) struct LinearRhs<'a> {
    pub tables: &'a LinearTables,
    pub forcing: bool,
}

impl NodeRhs<DVector<f64>> for LinearRhs<'_> {
    fn eval(
        &self,
        node: usize,
        _t: f64,
        args: &[DVector<f64>],
    ) -> Result<DVector<f64>, SolveError> {
        let k = node - self.tables.offset;
        let mut acc = if self.forcing {
            self.tables.q[k].clone()
        } else {
            DVector::zeros(args[0].len())
        };
        for (p, u) in self.tables.p.iter().zip(args) {
            acc.gemv(1.0, &p[k], u, 1.0);
        }
        Ok(acc)
    }
}

impl NodeRhs<DMatrix<f64>> for LinearRhs<'_> {
    fn eval(
        &self,
        node: usize,
        _t: f64,
        args: &[DMatrix<f64>],
    ) -> Result<DMatrix<f64>, SolveError> {
        let k = node - self.tables.offset;
        let mut acc = args[0].zero_like();
        for (p, u) in self.tables.p.iter().zip(args) {
            acc.gemm(1.0, &p[k], u, 1.0);
        }
        Ok(acc)
    }
}

/// `(M1, M2)`: the largest `Σ_i ‖p_i(t)‖` and `‖q(t)‖` over the grid of `[β, γ]`.
pub fn estimate_bounds(sys: &LinearDelaySystem) -> Result<(f64, f64), SolveError> {
    let layout = sys.layout()?;
    Ok(sys.tables(&layout)?.bounds())
}

/// Partition nodes from `start` to `γ`: a single jump where `μ > 1/(2 M1)`,
/// otherwise the farthest node within `1/(2 M1)`. A dense step longer than
/// the limit becomes a cell of its own.
pub(crate) fn partition_nodes(layout: &Layout, start: usize, m1: f64) -> Vec<usize> {
    let limit = if m1 > 0.0 { 0.5 / m1 } else { f64::INFINITY };
    let pts = &layout.points;
    let mut nodes = vec![start];
    let mut b = start;
    while b < layout.gamma {
        let next = if !layout.dense[b] && pts[b + 1] - pts[b] > limit {
            b + 1
        } else {
            let reach = limit * (1.0 + 1e-12);
            let n = pts[b..=layout.gamma].partition_point(|&p| p - pts[b] <= reach);
            (b + n - 1).max(b + 1)
        };
        nodes.push(next);
        b = next;
    }
    nodes
}

pub fn make_partition(sys: &LinearDelaySystem, m1: f64) -> Result<Vec<f64>, SolveError> {
    if m1.is_nan() {
        return Err(SolveError::BadParameter {
            name: "M1",
            value: m1,
        });
    }
    let layout = sys.layout()?;
    Ok(partition_nodes(&layout, layout.beta, m1)
        .into_iter()
        .map(|k| layout.points[k])
        .collect())
}

/// Solves forward from node `start` to `γ`, cell by cell. `x[0..=start]`
/// holds the known values; the rest of `x` is overwritten.
pub(crate) fn march<V: GridValue, R: NodeRhs<V>>(
    engine: &Engine<'_, V, R>,
    x: &mut [V],
    start: usize,
    m1: f64,
    m2: f64,
    opts: &PicardOptions,
) -> Result<Diagnostics, SolveError> {
    let lay = engine.layout;
    let mut diag = Diagnostics::default();
    if start >= lay.gamma {
        diag.partition = vec![lay.points[start]];
        return Ok(diag);
    }
    // with M1 = 0 any positive value works; this one gives a single cell
    let m1 = m1.max(0.5 / (lay.points[lay.gamma] - lay.points[start]));
    let nodes = partition_nodes(lay, start, m1);
    let mut nu = x[..=start].iter().map(GridValue::norm).fold(0.0, f64::max);

    for (cell, w) in nodes.windows(2).enumerate() {
        let (b, e) = (w[0], w[1]);
        let width = lay.points[e] - lay.points[b];
        let target = width.max(0.5 / m1);
        let ratio = |eps: f64| eps / (m1 * (eps + nu) + m2);
        let mut eps = nu + 1.0;
        let mut doublings = 0;
        while ratio(eps) < target && doublings < MAX_DOUBLINGS {
            eps *= 2.0;
            doublings += 1;
        }
        let bound = m1 * (eps + nu) + m2;
        let delta = width.min(ratio(eps));
        let mut outcome = IterOutcome::default();
        if e == b + 1 && !lay.dense[b] {
            engine.extend(x, b)?;
        } else {
            let zeta = lay.last_node_at_or_below(b, e, lay.points[b] + delta);
            if zeta < e {
                return Err(SolveError::WindowTooSmall {
                    beta: lay.points[b],
                    delta,
                });
            }
            let base = x[b].clone();
            for v in &mut x[b + 1..=e] {
                *v = base.clone();
            }
            let settings = IterSettings {
                tol: opts.tol,
                max_iter: opts.max_iter,
                epsilon: eps,
                certificate: None,
                log: false,
            };
            outcome = engine
                .iterate(x, b, e, &settings)
                .map_err(|err| match err {
                    SolveError::NoConvergence {
                        iterations,
                        sup_diff,
                        ..
                    } => SolveError::NoConvergence {
                        iterations,
                        sup_diff,
                        cell: Some(cell),
                    },
                    other => other,
                })?;
        }
        nu = x[b..=e].iter().map(GridValue::norm).fold(nu, f64::max);
        diag.iterations += outcome.iterations;
        diag.final_sup_diff = diag.final_sup_diff.max(outcome.sup_diff);
        diag.cells.push(CellReport {
            start: lay.points[b],
            end: lay.points[e],
            iterations: outcome.iterations,
            epsilon: eps,
            bound,
        });
    }
    diag.partition = nodes.iter().map(|&k| lay.points[k]).collect();
    Ok(diag)
}

pub(crate) fn initial_state(layout: &Layout) -> Vec<DVector<f64>> {
    let mut x = layout.history.clone();
    x.resize(layout.gamma + 1, layout.history[layout.beta].clone());
    x
}

/// Unique solution of a linear delay system on all of `[α, γ]`.
pub fn solve_global(sys: &LinearDelaySystem, opts: &PicardOptions) -> Result<Solution, SolveError> {
    opts.check()?;
    let layout = sys.layout()?;
    let tables = sys.tables(&layout)?;
    let (m1, m2) = tables.bounds();
    let rhs = LinearRhs {
        tables: &tables,
        forcing: true,
    };
    let engine = Engine::new(&layout, &rhs);
    let mut x = initial_state(&layout);
    let diagnostics = march(&engine, &mut x, layout.beta, m1, m2, opts)?;
    Ok(Solution {
        values: layout.solution(x),
        end: sys.gamma,
        diagnostics,
    })
}

/// Global solution of a nonlinear problem whose right-hand side obeys
/// `‖f(t, u)‖ <= Σ p_i(t) ‖u_i‖ + q(t)`; the envelope is checked at every evaluation.
pub fn solve_global_nonlinear(
    ivp: &DelayIvp,
    envelope: &GrowthEnvelope,
    opts: &PicardOptions,
) -> Result<Solution, SolveError> {
    opts.check()?;
    let layout = ivp.layout()?;
    if envelope.p.len() != ivp.n_delays() {
        return Err(SolveError::Shape {
            what: "envelope coefficients".into(),
            expected: (ivp.n_delays(), 1),
            got: (envelope.p.len(), 1),
        });
    }
    let sample = |what: String, f: &super::SharedScalarFn| -> Result<Vec<f64>, SolveError> {
        (layout.beta..=layout.gamma)
            .map(|k| {
                let t = layout.points[k];
                let v = f.eval(t).map_err(|message| SolveError::Evaluation {
                    what: what.clone(),
                    t,
                    message,
                })?;
                if v.is_finite() && v >= 0.0 {
                    Ok(v)
                } else {
                    Err(SolveError::Evaluation {
                        what: what.clone(),
                        t,
                        message: format!(
                            "envelope coefficient must be finite and nonnegative, got {v}"
                        ),
                    })
                }
            })
            .collect()
    };
    let p = envelope
        .p
        .iter()
        .enumerate()
        .map(|(i, f)| sample(format!("envelope_p{}", i + 1), f))
        .collect::<Result<Vec<_>, _>>()?;
    let q = sample("envelope_q".into(), &envelope.q)?;
    let m1 = (0..q.len())
        .map(|k| p.iter().map(|pi| pi[k]).sum::<f64>())
        .fold(0.0, f64::max);
    let m2 = q.iter().copied().fold(0.0, f64::max);

    let rhs = IvpRhs::new(ivp).with_envelope(layout.beta, p, q);
    let engine = Engine::new(&layout, &rhs);
    let mut x = initial_state(&layout);
    let diagnostics = march(&engine, &mut x, layout.beta, m1, m2, opts)?;
    Ok(Solution {
        values: layout.solution(x),
        end: ivp.gamma,
        diagnostics,
    })
}

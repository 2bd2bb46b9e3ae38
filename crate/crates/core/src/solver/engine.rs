//! Successive approximations of the discretized integral operator
//! `(T x)(t) = x(start) + int_start^t f(s, x(tau_1(s)), ...) Delta s` on a grid window.

use super::{Layout, SolveError};
use crate::calculus::cumulative_integral;
use crate::gridfn::GridValue;

/// Right-hand side evaluated at a grid node with its delayed arguments gathered.
pub(crate) trait NodeRhs<V>: Sync {
    fn eval(&self, node: usize, t: f64, args: &[V]) -> Result<V, SolveError>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IterSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Radius of the ball around `x(start)` the iterates must stay in.
    pub epsilon: f64,
    /// `(M, nL)` for checking `|x_k - x_{k-1}| <= M (nL)^{k-1} h_k(t, start)`.
    pub certificate: Option<(f64, f64)>,
    pub log: bool,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct IterOutcome {
    pub iterations: usize,
    pub sup_diff: f64,
    pub certified: Option<bool>,
    /// Per iteration, `|x_k - x_{k-1}|` at nodes `start..=zeta`.
    pub log: Vec<Vec<f64>>,
}

/// A node where the state is discontinuous: `x(u) = value`, `x = zero` just
/// before `u`. With `right_limit`, lookups of `u` from later nodes read the
/// limit of principal solutions started just after `u`: `u` counts as history
/// unless the delayed argument is moving past it.
#[derive(Debug, Clone)]
pub(crate) struct Jump<V> {
    pub node: usize,
    pub zero: V,
    pub right_limit: bool,
}

pub(crate) struct Engine<'a, V, R> {
    pub layout: &'a Layout,
    pub rhs: &'a R,
    pub jump: Option<Jump<V>>,
}

impl<'a, V: GridValue, R: NodeRhs<V>> Engine<'a, V, R> {
    pub fn new(layout: &'a Layout, rhs: &'a R) -> Self {
        Self {
            layout,
            rhs,
            jump: None,
        }
    }

    /// Delayed argument `i` at `node`; `left` selects the limit from below
    /// along the dense segment ending at `node`.
    fn lookup<'x>(&'x self, x: &'x [V], i: usize, node: usize, left: bool) -> &'x V {
        let lay = self.layout;
        let idx = &lay.delay_idx[i];
        let j = idx[node];
        let Some(jump) = &self.jump else {
            return &x[j];
        };
        if jump.node != j || node <= j {
            return &x[j];
        }
        let keep = if jump.right_limit {
            if left {
                idx[node - 1] > j
            } else {
                lay.dense.get(node).copied().unwrap_or(false) && idx[node + 1] > j
            }
        } else {
            !(left && idx[node - 1] < j && j > 0 && lay.dense[j - 1])
        };
        if keep {
            &x[j]
        } else {
            &jump.zero
        }
    }

    fn eval(&self, x: &[V], node: usize, left: bool) -> Result<V, SolveError> {
        let args = (0..self.layout.delay_idx.len())
            .map(|i| self.lookup(x, i, node, left).clone())
            .collect::<Vec<_>>();
        self.rhs.eval(node, self.layout.points[node], &args)
    }

    /// `f` at `node`, delayed arguments read from `x`.
    pub fn f(&self, x: &[V], node: usize) -> Result<V, SolveError> {
        self.eval(x, node, false)
    }

    /// Left limit of `f` at `node` when it may differ from the value, else `None`.
    fn f_left(&self, x: &[V], node: usize) -> Result<Option<V>, SolveError> {
        let Some(jump) = &self.jump else {
            return Ok(None);
        };
        let affected = node > jump.node
            && self
                .layout
                .delay_idx
                .iter()
                .any(|idx| idx[node] == jump.node);
        if affected {
            self.eval(x, node, true).map(Some)
        } else {
            Ok(None)
        }
    }

    /// One jump: `x(sigma(t)) = x(t) + mu(t) f(t, ...)` at a right-scattered node.
    pub fn extend(&self, x: &mut [V], node: usize) -> Result<(), SolveError> {
        debug_assert!(!self.layout.dense[node]);
        let mu = self.layout.points[node + 1] - self.layout.points[node];
        let f = self.f(x, node)?;
        let mut next = x[node].clone();
        next.add_scaled(&f, mu);
        x[node + 1] = next;
        Ok(())
    }

    /// Iterates the operator on `(start, zeta]` starting from the current
    /// contents of `x`, which must cover at least `0..=zeta`.
    pub fn iterate(
        &self,
        x: &mut [V],
        start: usize,
        zeta: usize,
        s: &IterSettings,
    ) -> Result<IterOutcome, SolveError> {
        let mut out = IterOutcome::default();
        if zeta <= start {
            return Ok(out);
        }
        let lay = self.layout;
        let pts = &lay.points[start..=zeta];
        let base = x[start].clone();
        let mut hk: Vec<f64> = vec![1.0; pts.len()];
        let mut certified = s.certificate.map(|_| true);
        let ball = s.epsilon * (1.0 + 1e-9) + 1e-12;

        loop {
            if out.iterations == s.max_iter {
                return Err(SolveError::NoConvergence {
                    iterations: out.iterations,
                    sup_diff: out.sup_diff,
                    cell: None,
                });
            }
            let last = if lay.dense[zeta - 1] { zeta } else { zeta - 1 };
            let fr = (start..=last)
                .map(|m| self.f(x, m))
                .collect::<Result<Vec<_>, _>>()?;

            let mut next = Vec::with_capacity(pts.len());
            let mut acc = base.clone();
            next.push(acc.clone());
            for m in start..zeta {
                let h = lay.points[m + 1] - lay.points[m];
                if lay.dense[m] {
                    acc.add_scaled(&fr[m - start], 0.5 * h);
                    match self.f_left(x, m + 1)? {
                        Some(fl) => acc.add_scaled(&fl, 0.5 * h),
                        None => acc.add_scaled(&fr[m + 1 - start], 0.5 * h),
                    }
                } else {
                    acc.add_scaled(&fr[m - start], h);
                }
                let dist = acc.dist(&base);
                if !dist.is_finite() || dist > ball {
                    return Err(SolveError::BallExit {
                        t: lay.points[m + 1],
                        distance: dist,
                        epsilon: s.epsilon,
                    });
                }
                next.push(acc.clone());
            }

            out.iterations += 1;
            let diffs = (0..pts.len())
                .map(|i| next[i].dist(&x[start + i]))
                .collect::<Vec<_>>();
            out.sup_diff = diffs.iter().copied().fold(0.0, f64::max);

            if let Some((m_bound, nl)) = s.certificate {
                hk = cumulative_integral(pts, |i| lay.dense[start + i], &hk);
                let scale = m_bound * nl.powi(out.iterations as i32 - 1);
                if diffs.iter().zip(&hk).any(|(d, h)| *d > scale * h + 1e-9) {
                    certified = Some(false);
                }
            }
            if s.log {
                out.log.push(diffs);
            }
            for (i, v) in next.into_iter().enumerate() {
                x[start + i] = v;
            }
            if out.sup_diff < s.tol {
                break;
            }
        }
        out.certified = certified;
        Ok(out)
    }
}

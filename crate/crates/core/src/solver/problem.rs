//! Problem data for delay dynamic initial value problems and their
//! validation onto the sampling grid.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::SolveError;
use crate::gridfn::{GridFunction, GridValue};
use crate::timescale::{tol_at, TimeScale};

/// Delayed arguments may sit this far above their snapped grid point.
pub const DELAY_SNAP_TOL: f64 = 1e-9;

/// Right-hand side `f(t, u_1, ..., u_n)` of a nonlinear delay equation.
pub trait DelayRhs: Send + Sync {
    fn eval(&self, t: f64, args: &[DVector<f64>]) -> Result<DVector<f64>, String>;
}

impl<F> DelayRhs for F
where
    F: Fn(f64, &[DVector<f64>]) -> DVector<f64> + Send + Sync,
{
    fn eval(&self, t: f64, args: &[DVector<f64>]) -> Result<DVector<f64>, String> {
        Ok(self(t, args))
    }
}

/// A function of time: delays, coefficients, forcing, envelopes.
pub trait TimeFn<T>: Send + Sync {
    fn eval(&self, t: f64) -> Result<T, String>;
}

impl<T, F> TimeFn<T> for F
where
    F: Fn(f64) -> T + Send + Sync,
{
    fn eval(&self, t: f64) -> Result<T, String> {
        Ok(self(t))
    }
}

/// Adapter for closures that can fail.
pub struct Fallible<F>(pub F);

impl<T, F> TimeFn<T> for Fallible<F>
where
    F: Fn(f64) -> Result<T, String> + Send + Sync,
{
    fn eval(&self, t: f64) -> Result<T, String> {
        (self.0)(t)
    }
}

impl<F> DelayRhs for Fallible<F>
where
    F: Fn(f64, &[DVector<f64>]) -> Result<DVector<f64>, String> + Send + Sync,
{
    fn eval(&self, t: f64, args: &[DVector<f64>]) -> Result<DVector<f64>, String> {
        (self.0)(t, args)
    }
}

pub type SharedRhs = Arc<dyn DelayRhs>;
pub type SharedDelay = Arc<dyn TimeFn<f64>>;
pub type SharedScalarFn = Arc<dyn TimeFn<f64>>;
pub type SharedMatrixFn = Arc<dyn TimeFn<DMatrix<f64>>>;
pub type SharedVectorFn = Arc<dyn TimeFn<DVector<f64>>>;

pub fn rhs_fn<F>(f: F) -> SharedRhs
where
    F: Fn(f64, &[DVector<f64>]) -> DVector<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn delay_fn<F>(f: F) -> SharedDelay
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn scalar_fn<F>(f: F) -> SharedScalarFn
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn matrix_fn<F>(f: F) -> SharedMatrixFn
where
    F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn vector_fn<F>(f: F) -> SharedVectorFn
where
    F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

/// `x^Δ(t) = f(t, x(τ_1(t)), …, x(τ_n(t)))` on `[β, γ]^κ`, `x = φ` on `[α, β]`.
#[derive(Clone)]
pub struct DelayIvp {
    pub timescale: TimeScale,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dim: usize,
    pub rhs: SharedRhs,
    pub delays: Vec<SharedDelay>,
    pub history: GridFunction<DVector<f64>>,
    /// Lipschitz constant; enables the iterate-bound certificate.
    pub lipschitz: Option<f64>,
    /// Bound on `‖f‖` over the ε-neighbourhood of the history; estimated when absent.
    pub bound: Option<f64>,
    /// Radius of the ball the iterates must stay in.
    pub epsilon: f64,
}

impl DelayIvp {
    /// `α` and `β` are taken from the history's domain.
    pub fn new(
        history: GridFunction<DVector<f64>>,
        gamma: f64,
        rhs: SharedRhs,
        delays: Vec<SharedDelay>,
    ) -> Self {
        Self {
            timescale: history.timescale().clone(),
            alpha: history.start(),
            beta: history.end(),
            gamma,
            dim: history.values()[0].len(),
            rhs,
            delays,
            history,
            lipschitz: None,
            bound: None,
            epsilon: 1.0,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_bound(mut self, m: f64) -> Self {
        self.bound = Some(m);
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }

    pub fn n_delays(&self) -> usize {
        self.delays.len()
    }

    /// Checks every problem invariant without solving.
    pub fn validate(&self) -> Result<(), SolveError> {
        self.layout().map(|_| ())
    }

    pub(crate) fn layout(&self) -> Result<Layout, SolveError> {
        for (name, v) in [("epsilon", self.epsilon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolveError::BadParameter { name, value: v });
            }
        }
        for (name, v) in [("lipschitz", self.lipschitz), ("bound", self.bound)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(SolveError::BadParameter { name, value: v });
                }
            }
        }
        Layout::build(
            &self.timescale,
            self.alpha,
            self.beta,
            self.gamma,
            self.dim,
            &self.delays,
            &self.history,
        )
    }
}

impl fmt::Debug for DelayIvp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayIvp")
            .field("timescale", &self.timescale.to_string())
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .field("dim", &self.dim)
            .field("n_delays", &self.delays.len())
            .field("lipschitz", &self.lipschitz)
            .field("bound", &self.bound)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

/// `x^Δ(t) = Σ p_i(t) x(τ_i(t)) + q(t)` on `[β, γ]^κ`, `x = φ` on `[α, β]`.
#[derive(Clone)]
pub struct LinearDelaySystem {
    pub timescale: TimeScale,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dim: usize,
    pub coeffs: Vec<SharedMatrixFn>,
    pub forcing: SharedVectorFn,
    pub delays: Vec<SharedDelay>,
    pub history: GridFunction<DVector<f64>>,
}

impl LinearDelaySystem {
    pub fn new(
        history: GridFunction<DVector<f64>>,
        gamma: f64,
        coeffs: Vec<SharedMatrixFn>,
        forcing: SharedVectorFn,
        delays: Vec<SharedDelay>,
    ) -> Self {
        Self {
            timescale: history.timescale().clone(),
            alpha: history.start(),
            beta: history.end(),
            gamma,
            dim: history.values()[0].len(),
            coeffs,
            forcing,
            delays,
            history,
        }
    }

    pub fn n_delays(&self) -> usize {
        self.delays.len()
    }

    /// Same system with another history and forcing.
    pub fn with_data(&self, history: GridFunction<DVector<f64>>, forcing: SharedVectorFn) -> Self {
        Self {
            history,
            forcing,
            ..self.clone()
        }
    }

    /// The equivalent nonlinear problem `f(t, u) = Σ p_i(t) u_i + q(t)`.
    pub fn as_nonlinear(&self) -> DelayIvp {
        let coeffs = self.coeffs.clone();
        let forcing = self.forcing.clone();
        let rhs = Fallible(
            move |t: f64, u: &[DVector<f64>]| -> Result<DVector<f64>, String> {
                let mut acc = forcing.eval(t)?;
                for (p, ui) in coeffs.iter().zip(u) {
                    acc += p.eval(t)? * ui;
                }
                Ok(acc)
            },
        );
        DelayIvp {
            timescale: self.timescale.clone(),
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            dim: self.dim,
            rhs: Arc::new(rhs),
            delays: self.delays.clone(),
            history: self.history.clone(),
            lipschitz: None,
            bound: None,
            epsilon: 1.0,
        }
    }

    /// Checks every problem invariant and samples the coefficients without solving.
    pub fn validate(&self) -> Result<(), SolveError> {
        let layout = self.layout()?;
        self.tables(&layout).map(|_| ())
    }

    pub(crate) fn layout(&self) -> Result<Layout, SolveError> {
        if self.coeffs.len() != self.delays.len() {
            return Err(SolveError::Shape {
                what: "number of coefficients".into(),
                expected: (self.delays.len(), 1),
                got: (self.coeffs.len(), 1),
            });
        }
        Layout::build(
            &self.timescale,
            self.alpha,
            self.beta,
            self.gamma,
            self.dim,
            &self.delays,
            &self.history,
        )
    }

    /// Coefficients and forcing sampled at the nodes `β..=γ`.
    pub(crate) fn tables(&self, layout: &Layout) -> Result<LinearTables, SolveError> {
        let d = self.dim;
        let nodes = layout.beta..=layout.gamma;
        let mut p = Vec::with_capacity(self.coeffs.len());
        for (i, c) in self.coeffs.iter().enumerate() {
            let mut col = Vec::with_capacity(nodes.clone().count());
            for node in nodes.clone() {
                let t = layout.points[node];
                let m = c.eval(t).map_err(|message| SolveError::Evaluation {
                    what: format!("p{}", i + 1),
                    t,
                    message,
                })?;
                if m.shape() != (d, d) {
                    return Err(SolveError::Shape {
                        what: format!("p{}", i + 1),
                        expected: (d, d),
                        got: m.shape(),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(SolveError::Evaluation {
                        what: format!("p{}", i + 1),
                        t,
                        message: "non-finite value".into(),
                    });
                }
                col.push(m);
            }
            p.push(col);
        }
        let mut q = Vec::new();
        for node in nodes {
            let t = layout.points[node];
            let v = self
                .forcing
                .eval(t)
                .map_err(|message| SolveError::Evaluation {
                    what: "q".into(),
                    t,
                    message,
                })?;
            if v.len() != d {
                return Err(SolveError::Shape {
                    what: "q".into(),
                    expected: (d, 1),
                    got: (v.len(), 1),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SolveError::Evaluation {
                    what: "q".into(),
                    t,
                    message: "non-finite value".into(),
                });
            }
            q.push(v);
        }
        Ok(LinearTables {
            offset: layout.beta,
            p,
            q,
        })
    }
}

impl fmt::Debug for LinearDelaySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearDelaySystem")
            .field("timescale", &self.timescale.to_string())
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .field("dim", &self.dim)
            .field("n_delays", &self.delays.len())
            .finish()
    }
}

/// Sublinear growth envelope `‖f(t, u)‖ <= Σ p_i(t) ‖u_i‖ + q(t)`.
#[derive(Clone)]
pub struct GrowthEnvelope {
    pub p: Vec<SharedScalarFn>,
    pub q: SharedScalarFn,
}

impl fmt::Debug for GrowthEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthEnvelope")
            .field("n_delays", &self.p.len())
            .finish()
    }
}

impl GrowthEnvelope {
    pub fn new(p: Vec<SharedScalarFn>, q: SharedScalarFn) -> Self {
        Self { p, q }
    }
}

/// Sampled coefficients of a linear system; node `k` is stored at `k - offset`.
#[derive(Debug, Clone)]
pub(crate) struct LinearTables {
    pub offset: usize,
    pub p: Vec<Vec<DMatrix<f64>>>,
    pub q: Vec<DVector<f64>>,
}

impl LinearTables {
    /// `(M1, M2)`: largest `Σ ‖p_i‖` and largest `‖q‖` over the nodes.
    pub fn bounds(&self) -> (f64, f64) {
        let m1 = (0..self.q.len())
            .map(|k| self.p.iter().map(|pi| GridValue::norm(&pi[k])).sum::<f64>())
            .fold(0.0, f64::max);
        let m2 = self.q.iter().map(GridValue::norm).fold(0.0, f64::max);
        (m1, m2)
    }
}

/// A validated problem mapped onto the grid slice `[α, γ]`. Node indices are
/// local: node 0 is `α`.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub ts: TimeScale,
    /// Global grid index of `α`.
    pub lo: usize,
    pub beta: usize,
    pub gamma: usize,
    pub dim: usize,
    pub points: Vec<f64>,
    /// `dense[k]`: segment `k -> k + 1` lies in a dense interval.
    pub dense: Vec<bool>,
    /// `delay_idx[i][k]`: snapped node of `τ_i(t_k)` for `k >= β`.
    pub delay_idx: Vec<Vec<usize>>,
    pub history: Vec<DVector<f64>>,
}

impl Layout {
    fn build(
        ts: &TimeScale,
        alpha: f64,
        beta: f64,
        gamma: f64,
        dim: usize,
        delays: &[SharedDelay],
        history: &GridFunction<DVector<f64>>,
    ) -> Result<Self, SolveError> {
        if !(alpha <= beta && beta <= gamma) {
            return Err(SolveError::Ordering { alpha, beta, gamma });
        }
        let grid_index = |name: &'static str, v: f64| {
            ts.index_of(v).ok_or(SolveError::OffGrid { name, value: v })
        };
        let lo = grid_index("alpha", alpha)?;
        let b = grid_index("beta", beta)? - lo;
        let g = grid_index("gamma", gamma)? - lo;
        if dim == 0 {
            return Err(SolveError::BadParameter {
                name: "dim",
                value: 0.0,
            });
        }
        if delays.is_empty() {
            return Err(SolveError::NoDelays);
        }
        if history.timescale() != ts
            || history.len() != b + 1
            || history.index_of(alpha) != Some(0)
            || history.index_of(beta) != Some(b)
        {
            return Err(SolveError::HistoryDomain { alpha, beta });
        }
        let hist = history.values().to_vec();
        if hist[0].len() != dim {
            return Err(SolveError::Shape {
                what: "history".into(),
                expected: (dim, 1),
                got: (hist[0].len(), 1),
            });
        }
        if let Some(t) = history
            .iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(t, _)| t)
        {
            return Err(SolveError::Evaluation {
                what: "history".into(),
                t,
                message: "non-finite value".into(),
            });
        }

        let points = ts.points()[lo..=lo + g].to_vec();
        let dense = (0..g)
            .map(|k| ts.is_dense_segment(lo + k))
            .collect::<Vec<_>>();
        // the κ-set drops γ when it is left-scattered
        let kappa_end = if g > b && !dense[g - 1] { g - 1 } else { g };

        let mut delay_idx = Vec::with_capacity(delays.len());
        for (i, tau) in delays.iter().enumerate() {
            let mut table = (0..=g).collect::<Vec<usize>>();
            for k in b..=g {
                let t = points[k];
                let v = tau.eval(t).map_err(|message| SolveError::Evaluation {
                    what: format!("tau{}", i + 1),
                    t,
                    message,
                })?;
                if !v.is_finite() {
                    return Err(SolveError::Evaluation {
                        what: format!("tau{}", i + 1),
                        t,
                        message: "non-finite value".into(),
                    });
                }
                if v > t + DELAY_SNAP_TOL.max(tol_at(t)) {
                    return Err(SolveError::DelayAhead {
                        delay: i + 1,
                        t,
                        value: v,
                    });
                }
                if k > kappa_end {
                    continue;
                }
                if v < alpha - DELAY_SNAP_TOL {
                    return Err(SolveError::DelayBeforeAlpha {
                        delay: i + 1,
                        t,
                        value: v,
                        alpha,
                    });
                }
                if !ts.contains_within(v, DELAY_SNAP_TOL) {
                    return Err(SolveError::DelayOffScale {
                        delay: i + 1,
                        t,
                        value: v,
                    });
                }
                let j = ts
                    .snap_down(v, DELAY_SNAP_TOL)
                    .filter(|&j| j >= lo && v - ts.points()[j] <= ts.dense_step() + DELAY_SNAP_TOL)
                    .ok_or(SolveError::DelayOffScale {
                        delay: i + 1,
                        t,
                        value: v,
                    })?;
                table[k] = (j - lo).min(k);
            }
            delay_idx.push(table);
        }

        Ok(Self {
            ts: ts.clone(),
            lo,
            beta: b,
            gamma: g,
            dim,
            points,
            dense,
            delay_idx,
            history: hist,
        })
    }

    /// Last node at which the right-hand side is evaluated (the κ-set end).
    pub fn kappa_end(&self) -> usize {
        if self.gamma > self.beta && !self.dense[self.gamma - 1] {
            self.gamma - 1
        } else {
            self.gamma
        }
    }

    /// Largest node in `[from, to]` whose point is `<= x`.
    pub fn last_node_at_or_below(&self, from: usize, to: usize, x: f64) -> usize {
        let slice = &self.points[from..=to];
        let n = slice.partition_point(|&p| p <= x + tol_at(x));
        from + n.saturating_sub(1)
    }

    pub fn solution<V: GridValue>(&self, values: Vec<V>) -> GridFunction<V> {
        GridFunction::from_grid_slice(&self.ts, self.lo, values)
    }
}

//! Solvers for delay dynamic initial value problems.
//!
//! * [`picard_solve`]: successive approximations on the local existence
//!   window, extended by one jump when the window ends at a right-scattered point.
//! * [`solve_by_steps`]: the local solver applied repeatedly, each solved
//!   segment becoming the history of the next.
//! * [`solve_global`] / [`solve_global_nonlinear`]: the method of steps over a
//!   partition whose cells are single jumps or have width at most `1/(2 M1)`.

mod engine;
mod global;
mod picard;
mod problem;

use thiserror::Error;

pub use global::{estimate_bounds, make_partition, solve_global, solve_global_nonlinear};
pub use picard::{
    existence_window, iterate_error_bound, picard_solve, picard_solve_from, picard_solve_logged,
    solve_by_steps, IterateLog,
};
pub use problem::{
    delay_fn, matrix_fn, rhs_fn, scalar_fn, vector_fn, DelayIvp, DelayRhs, Fallible,
    GrowthEnvelope, LinearDelaySystem, SharedDelay, SharedMatrixFn, SharedRhs, SharedScalarFn,
    SharedVectorFn, TimeFn, DELAY_SNAP_TOL,
};

pub(crate) use engine::{Engine, IterSettings, Jump, NodeRhs};
pub(crate) use global::{march, LinearRhs};
pub(crate) use problem::{Layout, LinearTables};

use nalgebra::DVector;

use crate::calculus::CalculusError;
use crate::gridfn::GridFunction;
use crate::timescale::TimeScaleError;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    TimeScale(#[from] TimeScaleError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error("need alpha <= beta <= gamma, got alpha={alpha}, beta={beta}, gamma={gamma}")]
    Ordering { alpha: f64, beta: f64, gamma: f64 },
    #[error("{name}={value} is not a grid point of the time scale")]
    OffGrid { name: &'static str, value: f64 },
    #[error("invalid {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("at least one delay is required")]
    NoDelays,
    #[error("history must be sampled on the grid of [{alpha}, {beta}]")]
    HistoryDomain { alpha: f64, beta: f64 },
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("evaluating {what} at t={t}: {message}")]
    Evaluation {
        what: String,
        t: f64,
        message: String,
    },
    #[error("tau{delay}(t) <= t violated at t={t} (tau{delay}={value})")]
    DelayAhead { delay: usize, t: f64, value: f64 },
    #[error("alpha <= tau{delay}(t) violated at t={t} (tau{delay}={value} < alpha={alpha})")]
    DelayBeforeAlpha {
        delay: usize,
        t: f64,
        value: f64,
        alpha: f64,
    },
    #[error("tau{delay}(t)={value} at t={t} does not land on the time scale grid")]
    DelayOffScale { delay: usize, t: f64, value: f64 },
    #[error("no bound M on f available")]
    MissingBound,
    #[error("window too small at beta={beta}: delta={delta} does not reach the next grid point; refine dense_step or enlarge epsilon")]
    WindowTooSmall { beta: f64, delta: f64 },
    #[error("iterate left the ball of radius {epsilon} at t={t} (distance {distance})")]
    BallExit { t: f64, distance: f64, epsilon: f64 },
    #[error("no convergence after {iterations} iterations (sup difference {sup_diff:e}){}", cell.map(|c| format!(" in cell {c}")).unwrap_or_default())]
    NoConvergence {
        iterations: usize,
        sup_diff: f64,
        cell: Option<usize>,
    },
    #[error("growth envelope violated at t={t}: |f|={norm} > {envelope}")]
    EnvelopeViolation { t: f64, norm: f64, envelope: f64 },
}

impl SolveError {
    /// Problem-definition errors, as opposed to failures of a valid solve.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SolveError::TimeScale(_)
                | SolveError::Ordering { .. }
                | SolveError::OffGrid { .. }
                | SolveError::BadParameter { .. }
                | SolveError::NoDelays
                | SolveError::HistoryDomain { .. }
                | SolveError::Shape { .. }
                | SolveError::DelayAhead { .. }
                | SolveError::DelayBeforeAlpha { .. }
                | SolveError::DelayOffScale { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl PicardOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }

    pub(crate) fn check(&self) -> Result<(), SolveError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SolveError::BadParameter {
                name: "tol",
                value: self.tol,
            });
        }
        if self.max_iter == 0 {
            return Err(SolveError::BadParameter {
                name: "max_iter",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// One step of the method of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
    pub epsilon: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Picard sweeps summed over all windows.
    pub iterations: usize,
    /// Largest final sup-norm difference over all windows.
    pub final_sup_diff: f64,
    pub window_delta: Option<f64>,
    pub zeta: Option<f64>,
    /// `β = β_0 < β_1 < … < end`.
    pub partition: Vec<f64>,
    pub cells: Vec<CellReport>,
    /// Whether every iterate respected `M (nL)^{k-1} h_k(t, β)`; `None`
    /// when no Lipschitz constant was supplied.
    pub bound_certified: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub values: GridFunction<DVector<f64>>,
    pub end: f64,
    pub diagnostics: Diagnostics,
}

impl Solution {
    pub fn at(&self, t: f64) -> Option<&DVector<f64>> {
        self.values.value_at(t)
    }
}

#[cfg(test)]
mod tests;

//! Principal solutions of linear delay systems and the variation of
//! parameters representation
//!
//! ```text
//! x(t) = X(t, β) φ(β)
//!      + ∫_β^t X(t, σ(η)) q(η) Δη
//!      + ∫_β^t X(t, σ(η)) Σ_i p_i(η) χ_[α,β)(τ_i(η)) φ(τ_i(η)) Δη
//! ```

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::calculus::CalculusError;
use crate::gridfn::{GridFunction, GridValue};
use crate::solver::{
    march, solve_global, Engine, Jump, Layout, LinearDelaySystem, LinearRhs, LinearTables,
    PicardOptions, SolveError,
};
use crate::timescale::tol_at;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Open(f64),
    Closed(f64),
    Unbounded,
}

/// An interval of the real line, read as its intersection with a time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSet {
    pub lower: Bound,
    pub upper: Bound,
}

impl CharacteristicSet {
    pub fn new(lower: Bound, upper: Bound) -> Self {
        Self { lower, upper }
    }

    /// `[a, b]`
    pub fn closed(a: f64, b: f64) -> Self {
        Self::new(Bound::Closed(a), Bound::Closed(b))
    }

    /// `[a, b)`
    pub fn half_open(a: f64, b: f64) -> Self {
        Self::new(Bound::Closed(a), Bound::Open(b))
    }

    /// `{z}`
    pub fn singleton(z: f64) -> Self {
        Self::closed(z, z)
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = tol_at(t);
        let above = match self.lower {
            Bound::Open(a) => t > a + tol,
            Bound::Closed(a) => t >= a - tol,
            Bound::Unbounded => true,
        };
        let below = match self.upper {
            Bound::Open(b) => t < b - tol,
            Bound::Closed(b) => t <= b + tol,
            Bound::Unbounded => true,
        };
        above && below
    }
}

/// `χ_U(t)`
pub fn characteristic(u: &CharacteristicSet, t: f64) -> f64 {
    if u.contains(t) {
        1.0
    } else {
        0.0
    }
}

/// `X(·, ζ)`: solution of the homogeneous system with initial data `χ_{ζ}(t) I`.
#[derive(Debug, Clone)]
pub struct PrincipalSolution {
    pub zeta: f64,
    pub values: GridFunction<DMatrix<f64>>,
}

impl PrincipalSolution {
    pub fn at(&self, t: f64) -> Option<&DMatrix<f64>> {
        self.values.value_at(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationReport {
    /// `sup_t ‖vop(t) - x(t)‖` over the grid of `[β, γ]`.
    pub sup: f64,
    pub argmax: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Principal solutions of one system, computed on demand and cached by source node.
pub struct Representation {
    sys: LinearDelaySystem,
    layout: Layout,
    tables: LinearTables,
    m1: f64,
    opts: PicardOptions,
    /// Keyed by source node and whether the right limit in the source is taken.
    cache: Mutex<HashMap<(usize, bool), Arc<Vec<DMatrix<f64>>>>>,
}

impl Representation {
    pub fn new(sys: &LinearDelaySystem, opts: PicardOptions) -> Result<Self, SolveError> {
        opts.check()?;
        let layout = sys.layout()?;
        let tables = sys.tables(&layout)?;
        let (m1, _) = tables.bounds();
        Ok(Self {
            sys: sys.clone(),
            layout,
            tables,
            m1,
            opts,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn node(&self, t: f64) -> Result<usize, SolveError> {
        let lay = &self.layout;
        let k = lay
            .ts
            .index_of(t)
            .filter(|&k| k >= lay.lo + lay.beta && k <= lay.lo + lay.gamma)
            .ok_or(CalculusError::OutOfDomain(t))?;
        Ok(k - lay.lo)
    }

    /// Principal solution from node `z` on nodes `0..=γ`; with `right_limit`,
    /// the limit of `X(·, η)` as `η` decreases to `t_z`.
    fn compute(&self, z: usize, right_limit: bool) -> Result<Vec<DMatrix<f64>>, SolveError> {
        let lay = &self.layout;
        let d = lay.dim;
        let mut x = vec![DMatrix::zeros(d, d); lay.gamma + 1];
        x[z] = DMatrix::identity(d, d);
        let rhs = LinearRhs {
            tables: &self.tables,
            forcing: false,
        };
        let mut engine = Engine::new(lay, &rhs);
        engine.jump = Some(Jump {
            node: z,
            zero: DMatrix::zeros(d, d),
            right_limit,
        });
        march(&engine, &mut x, z, self.m1, 0.0, &self.opts)?;
        Ok(x)
    }

    /// `X(t, η)` jumps as `η` leaves `t_z` when a delay rests on `t_z`.
    fn has_right_limit(&self, z: usize) -> bool {
        let lay = &self.layout;
        z < lay.gamma
            && lay.dense[z]
            && lay
                .delay_idx
                .iter()
                .any(|idx| (z + 1..=lay.kappa_end()).any(|s| idx[s] == z))
    }

    fn table(&self, z: usize, right_limit: bool) -> Result<Arc<Vec<DMatrix<f64>>>, SolveError> {
        let key = (z, right_limit && self.has_right_limit(z));
        if let Some(t) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(t.clone());
        }
        let table = Arc::new(self.compute(key.0, key.1)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, table.clone());
        Ok(table)
    }

    /// Computes every principal solution the representation needs, in parallel.
    pub fn prefill(&self) -> Result<(), SolveError> {
        let missing = {
            let cache = self.cache.lock().expect("cache lock");
            (self.layout.beta..=self.layout.gamma)
                .flat_map(|z| [(z, false), (z, self.has_right_limit(z))])
                .filter(|key| !cache.contains_key(key))
                .collect::<std::collections::BTreeSet<_>>()
        };
        let tables = missing
            .into_par_iter()
            .map(|(z, r)| self.compute(z, r).map(|t| ((z, r), Arc::new(t))))
            .collect::<Result<Vec<_>, _>>()?;
        self.cache.lock().expect("cache lock").extend(tables);
        Ok(())
    }

    pub fn principal(&self, zeta: f64) -> Result<PrincipalSolution, SolveError> {
        let z = self.layout.ts.index_of(zeta).ok_or(SolveError::OffGrid {
            name: "zeta",
            value: zeta,
        })?;
        if z < self.layout.lo + self.layout.beta || z > self.layout.lo + self.layout.gamma {
            return Err(SolveError::BadParameter {
                name: "zeta",
                value: zeta,
            });
        }
        let table = self.table(z - self.layout.lo, false)?;
        Ok(PrincipalSolution {
            zeta: self.layout.points[z - self.layout.lo],
            values: self.layout.solution(table.as_ref().clone()),
        })
    }

    /// `Σ_i p_i(u) χ_[α,β)(τ_i(u)) φ(τ_i(u)) + q(u)`; with `left`, the left
    /// limit at `u` along a dense segment.
    fn inhomogeneity(&self, node: usize, left: bool) -> DVector<f64> {
        let lay = &self.layout;
        let k = node - self.tables.offset;
        let mut g = self.tables.q[k].clone();
        let (mut in_solution, mut in_history) = (0usize, 0usize);
        for (p, idx) in self.tables.p.iter().zip(&lay.delay_idx) {
            let j = idx[node];
            let gate = if j < lay.beta {
                in_history += 1;
                true
            } else {
                in_solution += 1;
                // approaching β from below keeps the history value when β is left-dense
                left && j == lay.beta
                    && idx[node - 1] < lay.beta
                    && lay.beta > 0
                    && lay.dense[lay.beta - 1]
            };
            if gate {
                g.gemv(1.0, &p[k], &lay.history[j], 1.0);
            }
        }
        debug_assert_eq!(in_solution + in_history, lay.delay_idx.len());
        g
    }

    fn evaluate_node(&self, n: usize) -> Result<DVector<f64>, SolveError> {
        let lay = &self.layout;
        let b = lay.beta;
        let mut x = self.table(b, false)?[n].clone() * &lay.history[b];
        for j in b..n {
            let h = lay.points[j + 1] - lay.points[j];
            let right = self.table(j + 1, false)?;
            if lay.dense[j] {
                let left = self.table(j, true)?;
                x.gemv(0.5 * h, &left[n], &self.inhomogeneity(j, false), 1.0);
                x.gemv(0.5 * h, &right[n], &self.inhomogeneity(j + 1, true), 1.0);
            } else {
                x.gemv(h, &right[n], &self.inhomogeneity(j, false), 1.0);
            }
        }
        Ok(x)
    }

    /// The representation at a grid point of `[β, γ]`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>, SolveError> {
        let n = self.node(t)?;
        self.evaluate_node(n)
    }

    /// The representation at every grid point of `[β, γ]`.
    pub fn evaluate_all(&self) -> Result<GridFunction<DVector<f64>>, SolveError> {
        self.prefill()?;
        let lay = &self.layout;
        let values = (lay.beta..=lay.gamma)
            .into_par_iter()
            .map(|n| self.evaluate_node(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GridFunction::new(
            &lay.ts,
            self.sys.beta,
            self.sys.gamma,
            values,
        )?)
    }

    pub fn verify(&self, tol: f64) -> Result<RepresentationReport, SolveError> {
        let solved = solve_global(&self.sys, &self.opts)?;
        let vop = self.evaluate_all()?;
        let (mut sup, mut argmax) = (0.0, self.sys.beta);
        for (t, v) in vop.iter() {
            let x = solved.at(t).expect("solution covers [β, γ]");
            let diff = v.dist(x);
            if diff > sup || diff.is_nan() {
                sup = diff;
                argmax = t;
            }
        }
        Ok(RepresentationReport {
            sup,
            argmax,
            tol,
            passed: sup <= tol,
        })
    }
}

pub fn principal_solution(
    sys: &LinearDelaySystem,
    zeta: f64,
) -> Result<PrincipalSolution, SolveError> {
    Representation::new(sys, PicardOptions::default())?.principal(zeta)
}

pub fn vop_evaluate(sys: &LinearDelaySystem, t: f64) -> Result<DVector<f64>, SolveError> {
    let rep = Representation::new(sys, PicardOptions::default())?;
    rep.evaluate(t)
}

/// Compares the representation with [`solve_global`] at every grid point of `[β, γ]`.
pub fn verify_representation(
    sys: &LinearDelaySystem,
    tol: f64,
) -> Result<RepresentationReport, SolveError> {
    Representation::new(sys, PicardOptions::default())?.verify(tol)
}

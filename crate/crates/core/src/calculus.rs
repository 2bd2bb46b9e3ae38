//! Delta calculus on sampled time scales: Hilger derivative, Cauchy delta
//! integral, generalized polynomials, cylinder transformation and the
//! generalized exponential function.
//!
//! Scattered points are handled exactly (forward differences, `mu * f`
//! sums, `1 + mu * f` products). Dense segments use second-order stencils:
//! composite trapezoid for integrals and three-point differences for
//! derivatives.

use thiserror::Error;

use crate::gridfn::{GridFunction, GridValue};
use crate::timescale::{TimeScale, TimeScaleError};

/// `|1 + mu f|` below this counts as zero.
pub const REGRESSIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalculusError {
    #[error(transparent)]
    TimeScale(#[from] TimeScaleError),
    #[error("{0} is not a sample point of the function's domain")]
    OutOfDomain(f64),
    #[error("delta derivative undefined at {0}: it is a left-scattered maximum of the domain")]
    KappaViolation(f64),
    #[error("cylinder transformation undefined: 1 + h z = {0} is not positive")]
    Branch(f64),
    #[error("exponential undefined: 1 + mu f = {value} at t = {t}")]
    Regressivity { t: f64, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressivityClass {
    /// `1 + mu f > 0` everywhere.
    PositivelyRegressive,
    /// `1 + mu f < 0` everywhere.
    NegativelyRegressive,
    /// Nonzero everywhere, with both signs present.
    Regressive,
    NotRegressive,
}

impl RegressivityClass {
    pub fn is_regressive(self) -> bool {
        self != RegressivityClass::NotRegressive
    }
}

/// Weights `w` such that `sum w_k f(x_k)` is the derivative at `x` of the
/// quadratic interpolating `f` at the three nodes.
fn quadratic_slope_weights(xs: [f64; 3], x: f64) -> [f64; 3] {
    let [x0, x1, x2] = xs;
    [
        ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2)),
        ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2)),
        ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1)),
    ]
}

fn combine<V: GridValue>(vals: &[&V], weights: &[f64]) -> V {
    let mut out = vals[0].zero_like();
    for (v, w) in vals.iter().zip(weights) {
        out.add_scaled(v, *w);
    }
    out
}

/// Hilger derivative of a sampled function at the sample point `t`.
pub fn delta_derivative<V: GridValue>(f: &GridFunction<V>, t: f64) -> Result<V, CalculusError> {
    let i = f.index_of(t).ok_or(CalculusError::OutOfDomain(t))?;
    let pts = f.points();
    let vals = f.values();
    let last = pts.len() - 1;
    let mu = f.timescale().mu(pts[i])?;
    let dense_before = i > 0 && f.is_dense_segment(i - 1);

    if i == last {
        if !dense_before {
            return Err(if last == 0 {
                CalculusError::OutOfDomain(t)
            } else {
                CalculusError::KappaViolation(t)
            });
        }
        return Ok(backward(f, i));
    }
    if mu > 0.0 {
        let h = pts[i + 1] - pts[i];
        let mut d = vals[i + 1].clone();
        d.add_scaled(&vals[i], -1.0);
        return Ok(d.scaled(1.0 / h));
    }
    // right-dense interior point
    let x = pts[i];
    if dense_before {
        let w = quadratic_slope_weights([pts[i - 1], x, pts[i + 1]], x);
        return Ok(combine(&[&vals[i - 1], &vals[i], &vals[i + 1]], &w));
    }
    if i + 2 <= last && f.is_dense_segment(i + 1) {
        let w = quadratic_slope_weights([x, pts[i + 1], pts[i + 2]], x);
        return Ok(combine(&[&vals[i], &vals[i + 1], &vals[i + 2]], &w));
    }
    let h = pts[i + 1] - x;
    Ok(combine(&[&vals[i + 1], &vals[i]], &[1.0 / h, -1.0 / h]))
}

fn backward<V: GridValue>(f: &GridFunction<V>, i: usize) -> V {
    let pts = f.points();
    let vals = f.values();
    let x = pts[i];
    if i >= 2 && f.is_dense_segment(i - 2) {
        let w = quadratic_slope_weights([pts[i - 2], pts[i - 1], x], x);
        combine(&[&vals[i - 2], &vals[i - 1], &vals[i]], &w)
    } else {
        let h = x - pts[i - 1];
        combine(&[&vals[i], &vals[i - 1]], &[1.0 / h, -1.0 / h])
    }
}

/// Contribution of one grid segment to a delta integral: `mu * v_left` across
/// a jump, trapezoid across a dense segment.
#[inline]
pub(crate) fn segment_weights(x0: f64, x1: f64, dense: bool) -> (f64, f64) {
    let h = x1 - x0;
    if dense {
        (0.5 * h, 0.5 * h)
    } else {
        (h, 0.0)
    }
}

/// Running integrals `int_{p_0}^{p_m}` for every sample `m`.
pub(crate) fn cumulative_integral<V: GridValue>(
    points: &[f64],
    dense: impl Fn(usize) -> bool,
    values: &[V],
) -> Vec<V> {
    let mut acc = values[0].zero_like();
    let mut out = Vec::with_capacity(values.len());
    out.push(acc.clone());
    for m in 0..points.len().saturating_sub(1) {
        let (wl, wr) = segment_weights(points[m], points[m + 1], dense(m));
        acc.add_scaled(&values[m], wl);
        if wr != 0.0 {
            acc.add_scaled(&values[m + 1], wr);
        }
        out.push(acc.clone());
    }
    out
}

/// Cauchy delta integral of a sampled function between two of its sample points.
pub fn delta_integral<V: GridValue>(
    f: &GridFunction<V>,
    s: f64,
    t: f64,
) -> Result<V, CalculusError> {
    let i = f.index_of(s).ok_or(CalculusError::OutOfDomain(s))?;
    let j = f.index_of(t).ok_or(CalculusError::OutOfDomain(t))?;
    if i > j {
        return Err(TimeScaleError::EmptyInterval(s, t).into());
    }
    let pts = f.points();
    let vals = f.values();
    let mut acc = vals[i].zero_like();
    for m in i..j {
        let (wl, wr) = segment_weights(pts[m], pts[m + 1], f.is_dense_segment(m));
        acc.add_scaled(&vals[m], wl);
        if wr != 0.0 {
            acc.add_scaled(&vals[m + 1], wr);
        }
    }
    Ok(acc)
}

/// Delta integral of a function given pointwise, sampled on `grid(s, t)`.
pub fn delta_integral_fn<V: GridValue>(
    ts: &TimeScale,
    f: impl FnMut(f64) -> V,
    s: f64,
    t: f64,
) -> Result<V, CalculusError> {
    let g = GridFunction::from_fn(ts, s, t, f)?;
    delta_integral(&g, s, t)
}

/// `h_k(t, s)` at every sample point of `[s, t]`.
pub fn hk_table(
    ts: &TimeScale,
    k: usize,
    t: f64,
    s: f64,
) -> Result<GridFunction<f64>, CalculusError> {
    let mut h = GridFunction::from_fn(ts, s, t, |_| 1.0)?;
    for _ in 0..k {
        let next = cumulative_integral(h.points(), |m| h.is_dense_segment(m), h.values());
        h = GridFunction::new(ts, s, t, next)?;
    }
    Ok(h)
}

/// Generalized polynomial `h_k(t, s)`: `h_0 = 1`, `h_k(t, s) = int_s^t h_{k-1}(eta, s) Delta eta`.
pub fn hk_polynomial(ts: &TimeScale, k: usize, t: f64, s: f64) -> Result<f64, CalculusError> {
    let h = hk_table(ts, k, t, s)?;
    Ok(*h.values().last().expect("nonempty grid"))
}

/// Real branch of the cylinder transformation.
pub fn cylinder(h: f64, z: f64) -> Result<f64, CalculusError> {
    if h == 0.0 {
        return Ok(z);
    }
    let arg = 1.0 + h * z;
    if arg <= 0.0 {
        return Err(CalculusError::Branch(arg));
    }
    Ok((h * z).ln_1p() / h)
}

/// Generalized exponential `e_f(t, s)` for `s <= t`, with `f` given pointwise.
pub fn exp_function(
    ts: &TimeScale,
    f: impl FnMut(f64) -> f64,
    t: f64,
    s: f64,
) -> Result<f64, CalculusError> {
    let g = GridFunction::from_fn(ts, s, t, f)?;
    exp_function_grid(&g, t, s)
}

/// Generalized exponential from samples of `f`.
///
/// Equals `exp(int_s^t xi_mu(f))`. A scattered point `u` contributes
/// `exp(mu * xi_mu(f(u))) = 1 + mu f(u)` which is applied as a factor
/// directly; dense segments contribute `exp` of the trapezoid integral of `f`.
/// Negative factors are accepted only when `[s, t]` has no dense segment.
pub fn exp_function_grid(f: &GridFunction<f64>, t: f64, s: f64) -> Result<f64, CalculusError> {
    let i = f.index_of(s).ok_or(CalculusError::OutOfDomain(s))?;
    let j = f.index_of(t).ok_or(CalculusError::OutOfDomain(t))?;
    if i > j {
        return Err(TimeScaleError::EmptyInterval(s, t).into());
    }
    let pts = f.points();
    let vals = f.values();
    let mut dense_sum = 0.0;
    let mut product = 1.0;
    let mut first_negative = None;
    let mut any_dense = false;
    for m in i..j {
        let h = pts[m + 1] - pts[m];
        if f.is_dense_segment(m) {
            any_dense = true;
            dense_sum += 0.5 * h * (vals[m] + vals[m + 1]);
        } else {
            let g = 1.0 + h * vals[m];
            if g.abs() < REGRESSIVITY_TOL {
                return Err(CalculusError::Regressivity {
                    t: pts[m],
                    value: g,
                });
            }
            if g < 0.0 && first_negative.is_none() {
                first_negative = Some((pts[m], g));
            }
            product *= g;
        }
    }
    if let (Some((t, value)), true) = (first_negative, any_dense) {
        return Err(CalculusError::Regressivity { t, value });
    }
    Ok(product * dense_sum.exp())
}

/// Classifies `f` on `[a, b]` by the sign of `1 + mu f` at every sample point.
/// A left-scattered maximum of the whole time scale is skipped (it is not in
/// the kappa-set, where the exponential's defining equation lives).
pub fn regressivity_class(
    ts: &TimeScale,
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
) -> Result<RegressivityClass, CalculusError> {
    let mut pos = false;
    let mut neg = false;
    let (_, top) = ts.kappa_truncate(ts.min(), ts.max())?;
    for p in ts.grid(a, b)?.into_iter().filter(|&p| p <= top) {
        let g = 1.0 + ts.mu(p)? * f(p);
        if g.abs() < REGRESSIVITY_TOL {
            return Ok(RegressivityClass::NotRegressive);
        }
        if g > 0.0 {
            pos = true;
        } else {
            neg = true;
        }
    }
    Ok(match (pos, neg) {
        (true, false) => RegressivityClass::PositivelyRegressive,
        (false, true) => RegressivityClass::NegativelyRegressive,
        _ => RegressivityClass::Regressive,
    })
}

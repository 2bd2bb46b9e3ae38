//! Concrete time scales: finite ordered unions of closed intervals and
//! isolated points, with a uniform sampling grid on the dense parts.
//!
//! A [`TimeScale`] is immutable and cheap to clone (the data sits behind an
//! `Arc`), so solvers and grid functions hold their own handle to it.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Absolute tolerance for membership and grid-point matching near the origin.
/// Scaled by `max(1, |t|)` for larger magnitudes.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn tol_at(t: f64) -> f64 {
    MEMBERSHIP_TOL * t.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeScaleError {
    #[error("a time scale needs at least one component")]
    Empty,
    #[error("non-finite value in time scale description")]
    NonFinite,
    #[error("interval [{0}, {1}] must satisfy a < b")]
    BadInterval(f64, f64),
    #[error("components overlap at {0}")]
    Overlap(f64),
    #[error("invalid dense step {step}: {reason}")]
    Step { step: f64, reason: &'static str },
    #[error("{0} is not a point of the time scale")]
    NotInTimescale(f64),
    #[error("empty interval: {0} > {1}")]
    EmptyInterval(f64, f64),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sample {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// One connected piece of a time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Interval(f64, f64),
    Point(f64),
}

impl Component {
    pub fn start(&self) -> f64 {
        match *self {
            Component::Interval(a, _) => a,
            Component::Point(t) => t,
        }
    }

    pub fn end(&self) -> f64 {
        match *self {
            Component::Interval(_, b) => b,
            Component::Point(t) => t,
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, Component::Interval(..))
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Interval(a, b) => write!(f, "[{a}, {b}]"),
            Component::Point(t) => write!(f, "{{{t}}}"),
        }
    }
}

/// How a point is approached from one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Dense,
    Scattered,
    /// The point is the minimum (left) or maximum (right) of the time scale.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointClass {
    pub left: Side,
    pub right: Side,
}

#[derive(Debug)]
struct Inner {
    components: Vec<Component>,
    dense_step: f64,
    points: Vec<f64>,
    /// Component index of every grid point.
    owner: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TimeScale {
    inner: Arc<Inner>,
}

impl PartialEq for TimeScale {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.components == other.inner.components
                && self.inner.dense_step == other.inner.dense_step)
    }
}

impl TimeScale {
    /// Validates and normalizes the components: sorts them, merges pieces
    /// that share an endpoint, and rejects overlaps.
    pub fn new(
        components: impl IntoIterator<Item = Component>,
        dense_step: f64,
    ) -> Result<Self, TimeScaleError> {
        let mut comps: Vec<Component> = components.into_iter().collect();
        if comps.is_empty() {
            return Err(TimeScaleError::Empty);
        }
        for c in &comps {
            if !c.start().is_finite() || !c.end().is_finite() {
                return Err(TimeScaleError::NonFinite);
            }
            if let Component::Interval(a, b) = *c {
                if a >= b {
                    return Err(TimeScaleError::BadInterval(a, b));
                }
            }
        }
        if !(dense_step.is_finite() && dense_step > 0.0) {
            return Err(TimeScaleError::Step {
                step: dense_step,
                reason: "must be positive and finite",
            });
        }
        comps.sort_by(|x, y| {
            x.start()
                .partial_cmp(&y.start())
                .unwrap_or(Ordering::Equal)
                .then(x.end().partial_cmp(&y.end()).unwrap_or(Ordering::Equal))
        });

        let mut merged: Vec<Component> = Vec::with_capacity(comps.len());
        for c in comps {
            let Some(last) = merged.last_mut() else {
                merged.push(c);
                continue;
            };
            let gap = c.start() - last.end();
            if gap > tol_at(c.start()) {
                merged.push(c);
            } else if gap.abs() <= tol_at(c.start()) {
                // shared endpoint: closedness forces the union
                let (lo, hi) = (last.start(), last.end().max(c.end()));
                *last = if hi > lo {
                    Component::Interval(lo, hi)
                } else {
                    Component::Point(lo)
                };
            } else {
                return Err(TimeScaleError::Overlap(c.start()));
            }
        }

        let min_len = merged
            .iter()
            .filter_map(|c| match *c {
                Component::Interval(a, b) => Some(b - a),
                Component::Point(_) => None,
            })
            .fold(f64::INFINITY, f64::min);
        if dense_step > min_len * (1.0 + 1e-12) {
            return Err(TimeScaleError::Step {
                step: dense_step,
                reason: "exceeds the shortest interval component",
            });
        }

        let mut points = Vec::new();
        let mut owner = Vec::new();
        for (k, c) in merged.iter().enumerate() {
            match *c {
                Component::Point(t) => {
                    points.push(t);
                    owner.push(k);
                }
                Component::Interval(a, b) => {
                    let n = (((b - a) / dense_step) - 1e-9).ceil().max(1.0) as usize;
                    for i in 0..n {
                        points.push(a + (b - a) * (i as f64) / (n as f64));
                        owner.push(k);
                    }
                    points.push(b);
                    owner.push(k);
                }
            }
        }

        Ok(Self {
            inner: Arc::new(Inner {
                components: merged,
                dense_step,
                points,
                owner,
            }),
        })
    }

    /// The isolated points `lo, lo+1, …, hi`.
    pub fn integers(lo: i64, hi: i64) -> Result<Self, TimeScaleError> {
        if lo > hi {
            return Err(TimeScaleError::EmptyInterval(lo as f64, hi as f64));
        }
        Self::new((lo..=hi).map(|k| Component::Point(k as f64)), 1.0)
    }

    /// A single closed interval sampled at `step`.
    pub fn interval(a: f64, b: f64, step: f64) -> Result<Self, TimeScaleError> {
        Self::new([Component::Interval(a, b)], step)
    }

    pub fn components(&self) -> &[Component] {
        &self.inner.components
    }

    pub fn dense_step(&self) -> f64 {
        self.inner.dense_step
    }

    pub fn min(&self) -> f64 {
        self.inner.points[0]
    }

    pub fn max(&self) -> f64 {
        *self.inner.points.last().expect("nonempty grid")
    }

    /// Every sample point of the whole time scale, strictly increasing.
    pub fn points(&self) -> &[f64] {
        &self.inner.points
    }

    /// True when the grid segment from point `i` to point `i + 1` lies inside
    /// a dense interval (as opposed to jumping over a gap).
    pub fn is_dense_segment(&self, i: usize) -> bool {
        i + 1 < self.inner.owner.len() && self.inner.owner[i] == self.inner.owner[i + 1]
    }

    /// Index of the component containing `t`.
    pub fn locate(&self, t: f64) -> Result<usize, TimeScaleError> {
        let comps = &self.inner.components;
        let k = comps.partition_point(|c| c.end() + tol_at(c.end()) < t);
        match comps.get(k) {
            Some(c) if c.start() - tol_at(c.start()) <= t => Ok(k),
            _ => Err(TimeScaleError::NotInTimescale(t)),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.locate(t).is_ok()
    }

    /// Membership with a caller-chosen absolute tolerance.
    pub fn contains_within(&self, t: f64, tol: f64) -> bool {
        let comps = &self.inner.components;
        let k = comps.partition_point(|c| c.end() + tol < t);
        comps.get(k).is_some_and(|c| c.start() - tol <= t)
    }

    /// Grid index of `t`, if `t` is (within tolerance) a sample point.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pts = &self.inner.points;
        let tol = tol_at(t);
        let i = pts.partition_point(|&p| p < t - tol);
        (i < pts.len() && (pts[i] - t).abs() <= tol).then_some(i)
    }

    /// Largest grid index whose point is `<= v + tol`.
    pub fn snap_down(&self, v: f64, tol: f64) -> Option<usize> {
        let i = self.inner.points.partition_point(|&p| p <= v + tol);
        i.checked_sub(1)
    }

    /// Whether `a` and `b` sit in the same interval component.
    pub fn same_interval(&self, a: f64, b: f64) -> bool {
        match (self.locate(a), self.locate(b)) {
            (Ok(i), Ok(j)) => i == j && self.inner.components[i].is_interval(),
            _ => false,
        }
    }

    /// Forward jump: the smallest point strictly after `t`, or `t` at the maximum.
    pub fn sigma(&self, t: f64) -> Result<f64, TimeScaleError> {
        let k = self.locate(t)?;
        let c = self.inner.components[k];
        if c.end() - t > tol_at(t) {
            return Ok(t);
        }
        Ok(self
            .inner
            .components
            .get(k + 1)
            .map(Component::start)
            .unwrap_or(t))
    }

    /// Backward jump: the largest point strictly before `t`, or `t` at the minimum.
    pub fn rho(&self, t: f64) -> Result<f64, TimeScaleError> {
        let k = self.locate(t)?;
        let c = self.inner.components[k];
        if t - c.start() > tol_at(t) {
            return Ok(t);
        }
        Ok(match k {
            0 => t,
            _ => self.inner.components[k - 1].end(),
        })
    }

    /// Graininess `sigma(t) - t`.
    pub fn mu(&self, t: f64) -> Result<f64, TimeScaleError> {
        Ok(self.sigma(t)? - t)
    }

    pub fn classify(&self, t: f64) -> Result<PointClass, TimeScaleError> {
        let s = self.sigma(t)?;
        let r = self.rho(t)?;
        let left = if t - self.min() <= tol_at(t) {
            Side::Boundary
        } else if r == t {
            Side::Dense
        } else {
            Side::Scattered
        };
        let right = if self.max() - t <= tol_at(t) {
            Side::Boundary
        } else if s == t {
            Side::Dense
        } else {
            Side::Scattered
        };
        Ok(PointClass { left, right })
    }

    /// Sample points of `[a, b]` on this time scale: `a`, every grid point
    /// strictly between, and `b`.
    pub fn grid(&self, a: f64, b: f64) -> Result<Vec<f64>, TimeScaleError> {
        self.locate(a)?;
        self.locate(b)?;
        if a > b + tol_at(b) {
            return Err(TimeScaleError::EmptyInterval(a, b));
        }
        let mut out = vec![a];
        if (b - a).abs() <= tol_at(b) {
            return Ok(out);
        }
        let pts = &self.inner.points;
        let lo = pts.partition_point(|&p| p <= a + tol_at(a));
        let hi = pts.partition_point(|&p| p < b - tol_at(b));
        out.extend_from_slice(&pts[lo..hi.max(lo)]);
        out.push(b);
        Ok(out)
    }

    /// The kappa-truncation of `[a, b]`: drops `b` when it is left-scattered.
    pub fn kappa_truncate(&self, a: f64, b: f64) -> Result<(f64, f64), TimeScaleError> {
        self.locate(a)?;
        if a > b + tol_at(b) {
            return Err(TimeScaleError::EmptyInterval(a, b));
        }
        let class = self.classify(b)?;
        let r = self.rho(b)?;
        if class.left == Side::Scattered && r >= a - tol_at(a) {
            Ok((a, r))
        } else {
            Ok((a, b))
        }
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.components().iter().map(|c| c.to_string()).collect();
        write!(f, "{} (step {})", parts.join(" u "), self.dense_step())
    }
}

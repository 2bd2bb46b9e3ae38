//! Functions sampled on the grid of a time-scale interval.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::timescale::{tol_at, TimeScale, TimeScaleError};

/// Values a [`GridFunction`] can carry: scalars, state vectors and matrices.
///
/// `norm` is the max-norm for vectors and the induced operator norm
/// (max absolute row sum) for matrices.
pub trait GridValue: Clone + Debug + Send + Sync + 'static {
    fn shape(&self) -> (usize, usize);
    fn norm(&self) -> f64;
    fn zero_like(&self) -> Self;
    /// `self += k * other`
    fn add_scaled(&mut self, other: &Self, k: f64);

    fn scaled(&self, k: f64) -> Self {
        let mut out = self.zero_like();
        out.add_scaled(self, k);
        out
    }

    fn dist(&self, other: &Self) -> f64 {
        let mut d = self.clone();
        d.add_scaled(other, -1.0);
        d.norm()
    }
}

impl GridValue for f64 {
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, other: &Self, k: f64) {
        *self += k * other;
    }
}

impl GridValue for DVector<f64> {
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn norm(&self) -> f64 {
        self.amax()
    }
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, other: &Self, k: f64) {
        self.axpy(k, other, 1.0);
    }
}

impl GridValue for DMatrix<f64> {
    fn shape(&self) -> (usize, usize) {
        self.shape()
    }
    fn norm(&self) -> f64 {
        operator_norm(self)
    }
    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, other: &Self, k: f64) {
        *self += other * k;
    }
}

/// Operator norm induced by the max-norm: the largest absolute row sum.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Samples of a function on `grid(a, b)` of a time scale.
#[derive(Debug, Clone)]
pub struct GridFunction<V> {
    ts: TimeScale,
    points: Vec<f64>,
    values: Vec<V>,
    dense: Vec<bool>,
}

impl<V: GridValue> GridFunction<V> {
    pub fn new(ts: &TimeScale, a: f64, b: f64, values: Vec<V>) -> Result<Self, TimeScaleError> {
        let points = ts.grid(a, b)?;
        if points.len() != values.len() {
            return Err(TimeScaleError::LengthMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        let expected = values[0].shape();
        if let Some((index, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| v.shape() != expected)
        {
            return Err(TimeScaleError::ShapeMismatch {
                index,
                expected,
                got: v.shape(),
            });
        }
        let dense = points
            .windows(2)
            .map(|w| ts.same_interval(w[0], w[1]))
            .collect();
        Ok(Self {
            ts: ts.clone(),
            points,
            values,
            dense,
        })
    }

    pub fn from_fn(
        ts: &TimeScale,
        a: f64,
        b: f64,
        mut f: impl FnMut(f64) -> V,
    ) -> Result<Self, TimeScaleError> {
        let values = ts.grid(a, b)?.into_iter().map(&mut f).collect();
        Self::new(ts, a, b, values)
    }

    pub fn try_from_fn<E: From<TimeScaleError>>(
        ts: &TimeScale,
        a: f64,
        b: f64,
        f: impl FnMut(f64) -> Result<V, E>,
    ) -> Result<Self, E> {
        let values = ts
            .grid(a, b)?
            .into_iter()
            .map(f)
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self::new(ts, a, b, values)?)
    }

    /// Builds from a slice of the global grid; the caller guarantees the
    /// points are `ts.points()[lo..=hi]`.
    pub(crate) fn from_grid_slice(ts: &TimeScale, lo: usize, values: Vec<V>) -> Self {
        let hi = lo + values.len() - 1;
        let points = ts.points()[lo..=hi].to_vec();
        let dense = (lo..hi).map(|i| ts.is_dense_segment(i)).collect();
        Self {
            ts: ts.clone(),
            points,
            values,
            dense,
        }
    }

    pub fn timescale(&self) -> &TimeScale {
        &self.ts
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether the segment between sample `i` and sample `i + 1` is dense.
    pub fn is_dense_segment(&self, i: usize) -> bool {
        self.dense.get(i).copied().unwrap_or(false)
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = tol_at(t);
        let i = self.points.partition_point(|&p| p < t - tol);
        (i < self.points.len() && (self.points[i] - t).abs() <= tol).then_some(i)
    }

    pub fn value_at(&self, t: f64) -> Option<&V> {
        self.index_of(t).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &V)> {
        self.points.iter().copied().zip(self.values.iter())
    }

    /// Restriction to `[a, b]`; both ends must be sample points.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self, TimeScaleError> {
        let i = self.index_of(a).ok_or(TimeScaleError::NotInTimescale(a))?;
        let j = self.index_of(b).ok_or(TimeScaleError::NotInTimescale(b))?;
        if i > j {
            return Err(TimeScaleError::EmptyInterval(a, b));
        }
        Ok(Self {
            ts: self.ts.clone(),
            points: self.points[i..=j].to_vec(),
            values: self.values[i..=j].to_vec(),
            dense: self.dense[i..j].to_vec(),
        })
    }

    pub fn map<W: GridValue>(&self, f: impl FnMut(&V) -> W) -> GridFunction<W> {
        GridFunction {
            ts: self.ts.clone(),
            points: self.points.clone(),
            values: self.values.iter().map(f).collect(),
            dense: self.dense.clone(),
        }
    }
}

//! Test problems and independent reference computations.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use timescale_dde::solver::{delay_fn, matrix_fn, vector_fn, LinearDelaySystem};
use timescale_dde::{Component, GridFunction, TimeScale};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `t - lag` if it lies on the time scale, otherwise the nearest scale point
/// below it; never below `floor`.
pub fn retard(ts: &TimeScale, t: f64, lag: f64, floor: f64) -> f64 {
    let v = t - lag;
    if v <= floor {
        return floor;
    }
    if ts.contains(v) {
        return v;
    }
    let i = ts.snap_down(v, 0.0).expect("scale reaches below t - lag");
    ts.points()[i].max(floor)
}

/// A linear system `x^Δ = Σ (A_i + B_i sin t) x(τ_i(t)) + c + e cos t` with
/// history `h0 + h1 t`, stored as plain numbers.
#[derive(Debug, Clone)]
pub struct LinearCase {
    pub ts: TimeScale,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub d: usize,
    pub lags: Vec<f64>,
    /// Row-major `d x d` blocks, one per delay.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub e: Vec<f64>,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

impl LinearCase {
    pub fn random(
        rng: &mut StdRng,
        ts: TimeScale,
        (alpha, beta, gamma): (f64, f64, f64),
        d: usize,
        lags: Vec<f64>,
        coef: f64,
    ) -> Self {
        let n = lags.len();
        let mut block = |scale: f64| {
            (0..d * d)
                .map(|_| rng.gen_range(-scale..=scale))
                .collect::<Vec<_>>()
        };
        let a = (0..n).map(|_| block(coef / 2.0)).collect();
        let b = (0..n).map(|_| block(coef / 2.0)).collect();
        let mut vec = |scale: f64| {
            (0..d)
                .map(|_| rng.gen_range(-scale..=scale))
                .collect::<Vec<_>>()
        };
        Self {
            ts,
            alpha,
            beta,
            gamma,
            d,
            lags,
            a,
            b,
            c: vec(1.0),
            e: vec(1.0),
            h0: vec(1.0),
            h1: vec(0.5),
        }
    }

    pub fn coeff(&self, i: usize, t: f64) -> Vec<f64> {
        let s = t.sin();
        self.a[i]
            .iter()
            .zip(&self.b[i])
            .map(|(a, b)| a + b * s)
            .collect()
    }

    pub fn forcing(&self, t: f64) -> Vec<f64> {
        let c = t.cos();
        self.c.iter().zip(&self.e).map(|(a, b)| a + b * c).collect()
    }

    pub fn history(&self, t: f64) -> Vec<f64> {
        self.h0
            .iter()
            .zip(&self.h1)
            .map(|(a, b)| a + b * t)
            .collect()
    }

    pub fn tau(&self, i: usize, t: f64) -> f64 {
        retard(&self.ts, t, self.lags[i], self.alpha)
    }

    pub fn system(&self) -> LinearDelaySystem {
        let d = self.d;
        let me = self.clone();
        let history = GridFunction::from_fn(&self.ts, self.alpha, self.beta, |t| {
            DVector::from_vec(me.history(t))
        })
        .unwrap();
        let coeffs = (0..self.lags.len())
            .map(|i| {
                let me = self.clone();
                matrix_fn(move |t| DMatrix::from_row_slice(d, d, &me.coeff(i, t)))
            })
            .collect();
        let me = self.clone();
        let forcing = vector_fn(move |t| DVector::from_vec(me.forcing(t)));
        let delays = (0..self.lags.len())
            .map(|i| {
                let me = self.clone();
                delay_fn(move |t| me.tau(i, t))
            })
            .collect();
        LinearDelaySystem::new(history, self.gamma, coeffs, forcing, delays)
    }

    /// Forward recursion `x(σ(t)) = x(t) + μ(t) (Σ p_i x(τ_i) + q)` over a
    /// purely scattered grid. Returns `(t, x(t))` on `[α, γ]`.
    pub fn recursion(&self) -> Vec<(f64, Vec<f64>)> {
        let pts: Vec<f64> = self
            .ts
            .points()
            .iter()
            .copied()
            .filter(|&p| p >= self.alpha - 1e-12 && p <= self.gamma + 1e-12)
            .collect();
        let find = |v: f64| {
            pts.iter()
                .position(|&p| (p - v).abs() < 1e-9)
                .expect("delay on grid")
        };
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
        for &t in pts.iter().take_while(|&&p| p <= self.beta + 1e-12) {
            x.push(self.history(t));
        }
        while x.len() < pts.len() {
            let k = x.len() - 1;
            let t = pts[k];
            let mu = pts[k + 1] - t;
            let mut rate = self.forcing(t);
            for i in 0..self.lags.len() {
                let p = self.coeff(i, t);
                let u = &x[find(self.tau(i, t))];
                for r in 0..self.d {
                    for c in 0..self.d {
                        rate[r] += p[r * self.d + c] * u[c];
                    }
                }
            }
            let next = x[k].iter().zip(&rate).map(|(a, b)| a + mu * b).collect();
            x.push(next);
        }
        pts.into_iter().zip(x).collect()
    }
}

/// Isolated points `0, g_1, g_1 + g_2, …` shifted to start at `start`, with gaps drawn from `gaps`.
pub fn random_discrete(rng: &mut StdRng, start: f64, count: usize, gaps: &[f64]) -> TimeScale {
    let mut t = start;
    let mut comps = Vec::with_capacity(count);
    for _ in 0..count {
        comps.push(Component::Point(t));
        t += gaps[rng.gen_range(0..gaps.len())];
    }
    TimeScale::new(comps, 1.0).unwrap()
}

/// Alternating dense intervals (at most `quarters / 4` long) and isolated
/// points on `[lo, ...]`, step `step`.
pub fn random_mixed(
    rng: &mut StdRng,
    lo: f64,
    pieces: usize,
    quarters: u32,
    step: f64,
) -> TimeScale {
    let mut comps = Vec::new();
    let mut t = lo;
    for k in 0..pieces {
        if k % 2 == 0 {
            let len = rng.gen_range(2..=quarters) as f64 * 0.25;
            comps.push(Component::Interval(t, t + len));
            t += len;
        } else {
            for _ in 0..rng.gen_range(1..=3) {
                t += rng.gen_range(1..=4) as f64 * 0.25;
                comps.push(Component::Point(t));
            }
        }
        t += rng.gen_range(1..=4) as f64 * 0.25;
    }
    TimeScale::new(comps, step).unwrap()
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

//! Closed interval arithmetic over `f64`.
//!
//! An [`Interval`] is a nonempty set `[lo, hi]` with `lo <= hi`, both finite.
//! Binary operations return the exact range of the operation over all pairs
//! drawn from the operands, evaluated in `f64`:
//!
//! - add:  `[a, b] + [c, d] = [a + c, b + d]`
//! - sub:  `[a, b] - [c, d] = [a - d, b - c]`
//! - mul:  min/max over the four endpoint products
//!
//! Endpoints are not rounded outward, so each computed endpoint can be off by
//! the rounding error of the single `f64` operation that produced it (about
//! 1 ulp). Containment therefore holds up to that slack, which is the
//! documented contract here; none of the downstream tolerances are anywhere
//! near 1 ulp. Division is not provided because nothing in this crate needs it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IntervalError {
    #[error("invalid interval bounds: lo = {lo}, hi = {hi}")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Builds `[lo, hi]`, rejecting NaN, infinities, and `lo > hi`.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(IntervalError::InvalidBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        debug_assert!(x.is_finite());
        Self { lo: x, hi: x }
    }

    /// Interval from center and (nonnegative) half-width.
    pub fn centered(mid: f64, rad: f64) -> Self {
        debug_assert!(rad >= 0.0);
        Self {
            lo: mid - rad,
            hi: mid + rad,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `max(|lo|, |hi|)`: the largest magnitude attained on the interval.
    pub fn abs_max(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Exact image of `sin` over the interval.
    pub fn sin(&self) -> Interval {
        use std::f64::consts::{FRAC_PI_2, PI};
        trig_range(self.lo, self.hi, f64::sin, FRAC_PI_2, -FRAC_PI_2 + PI + PI)
    }

    /// Exact image of `cos` over the interval.
    pub fn cos(&self) -> Interval {
        use std::f64::consts::PI;
        trig_range(self.lo, self.hi, f64::cos, 0.0, PI)
    }
}

/// Range of a 2π-periodic map with maxima at `x_max + 2πk` and minima at
/// `x_min + 2πk`, monotone between adjacent extrema.
fn trig_range(lo: f64, hi: f64, f: fn(f64) -> f64, x_max: f64, x_min: f64) -> Interval {
    let tau = std::f64::consts::TAU;
    if hi - lo >= tau {
        return Interval { lo: -1.0, hi: 1.0 };
    }
    let has_point = |p: f64| ((lo - p) / tau).ceil() <= ((hi - p) / tau).floor();
    let (fa, fb) = (f(lo), f(hi));
    let mut out = Interval {
        lo: fa.min(fb),
        hi: fa.max(fb),
    };
    if has_point(x_max) {
        out.hi = 1.0;
    }
    if has_point(x_min) {
        out.lo = -1.0;
    }
    out
}

impl std::ops::Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: self.lo + rhs.lo,
            hi: self.hi + rhs.hi,
        }
    }
}

impl std::ops::Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval {
            lo: self.lo - rhs.hi,
            hi: self.hi - rhs.lo,
        }
    }
}

impl std::ops::Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let (a, b, c, d) = (self.lo, self.hi, rhs.lo, rhs.hi);
        let p = [a * c, a * d, b * c, b * d];
        Interval {
            lo: p.iter().copied().fold(f64::INFINITY, f64::min),
            hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl std::ops::Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl std::ops::Mul<Interval> for f64 {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let (a, b) = (self * rhs.lo, self * rhs.hi);
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

/// Dense row-major matrix of intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Interval>,
}

impl IntervalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Interval::point(0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Interval) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Degenerate interval matrix wrapping a real one.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            data: entries.iter().map(|&x| Interval::point(x)).collect(),
        }
    }

    pub fn col_vec(entries: &[Interval]) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Interval) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Interval] {
        &self.data
    }

    fn check_shape(&self, other: &Self) -> Result<(), IntervalError> {
        if self.shape() != other.shape() {
            return Err(IntervalError::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, IntervalError> {
        self.check_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, IntervalError> {
        self.check_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn neg(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| -a).collect(),
        }
    }

    pub fn scale(&self, s: Interval) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// Entry `(i, j)` of the product is the interval sum over `k` of
    /// `self[i, k] * other[k, j]`.
    pub fn matmul(&self, other: &Self) -> Result<Self, IntervalError> {
        if self.cols != other.rows {
            return Err(IntervalError::ShapeMismatch {
                expected: (self.cols, other.cols),
                got: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Interval::point(0.0);
                for k in 0..self.cols {
                    acc = acc + self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Skew matrix of a 3-vector: rows `[0, -a3, a2; a3, 0, -a1; -a2, a1, 0]`.
    pub fn skew(&self) -> Result<Self, IntervalError> {
        if self.shape() != (3, 1) {
            return Err(IntervalError::ShapeMismatch {
                expected: (3, 1),
                got: self.shape(),
            });
        }
        let z = Interval::point(0.0);
        let (a1, a2, a3) = (self.get(0, 0), self.get(1, 0), self.get(2, 0));
        Ok(Self {
            rows: 3,
            cols: 3,
            data: vec![z, -a3, a2, a3, z, -a1, -a2, a1, z],
        })
    }

    /// Interval cross product of 3-vectors, computed as `skew(self) * other`.
    pub fn cross(&self, other: &Self) -> Result<Self, IntervalError> {
        if other.shape() != (3, 1) {
            return Err(IntervalError::ShapeMismatch {
                expected: (3, 1),
                got: other.shape(),
            });
        }
        self.skew()?.matmul(other)
    }
}

//! Taylor-expansion enclosures of analytic functions of a scalar PZ.
//!
//! For a scalar PZ `P` with center `c`, the degree-`d` enclosure is
//!
//! ```text
//!   sum_{n=0}^{d}  f^(n)(c)/n! * (P - c)^n   (+)   [r]
//! ```
//!
//! with the Lagrange remainder interval
//!
//! ```text
//!   [r] = f^(d+1)([inf P, sup P]) * [bounds((P - c)^(d+1))] / (d+1)!
//! ```
//!
//! computed in interval arithmetic and attached through a fresh
//! indeterminate. The result therefore contains `f(P)` pointwise: any
//! realization of the input indeterminates maps to a value inside the
//! enclosure sliced at that realization.

use super::{pz_mul_scalar, IndetId, PolyZonotope, PzError};
use crate::interval::Interval;

/// An analytic function given by its derivative tower, evaluable pointwise
/// and on intervals.
pub trait TaylorSeries {
    fn derivative(&self, order: usize, x: f64) -> f64;
    fn derivative_range(&self, order: usize, x: Interval) -> Interval;
}

pub struct Sin;
pub struct Cos;

impl TaylorSeries for Sin {
    fn derivative(&self, order: usize, x: f64) -> f64 {
        match order % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        }
    }

    fn derivative_range(&self, order: usize, x: Interval) -> Interval {
        match order % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        }
    }
}

impl TaylorSeries for Cos {
    fn derivative(&self, order: usize, x: f64) -> f64 {
        Sin.derivative(order + 1, x)
    }

    fn derivative_range(&self, order: usize, x: Interval) -> Interval {
        Sin.derivative_range(order + 1, x)
    }
}

/// Degree-`d` Taylor enclosure of `f(P)` for scalar `P`.
pub fn pz_taylor(
    f: &dyn TaylorSeries,
    p: &PolyZonotope,
    degree: usize,
) -> Result<PolyZonotope, PzError> {
    if p.dim() != 1 {
        return Err(PzError::DimMismatch {
            expected: 1,
            got: p.dim(),
        });
    }
    let c = p.center()[0];
    let centered = p.add_const(&[-c])?;
    let f0 = f.derivative(0, c);
    if !f0.is_finite() {
        return Err(PzError::Divergence);
    }
    let mut acc = PolyZonotope::constant(vec![f0]);
    let mut power = PolyZonotope::constant(vec![1.0]);
    let mut factorial = 1.0;
    for n in 1..=degree {
        power = pz_mul_scalar(&power, &centered)?;
        factorial *= n as f64;
        let coef = f.derivative(n, c) / factorial;
        if !coef.is_finite() {
            return Err(PzError::Divergence);
        }
        if coef != 0.0 {
            acc = acc.add(&power.scale(coef))?;
        }
    }
    power = pz_mul_scalar(&power, &centered)?;
    factorial *= (degree + 1) as f64;
    let dpow = power.bounds_scalar();
    let drange = f.derivative_range(degree + 1, p.bounds_scalar());
    let raw = drange * dpow;
    let rem = Interval::new(raw.lo() / factorial, raw.hi() / factorial)
        .map_err(|_| PzError::Divergence)?;
    acc.add(&PolyZonotope::from_interval(rem, IndetId::fresh()))
}

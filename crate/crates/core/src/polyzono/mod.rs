//! Polynomial zonotopes.
//!
//! A polynomial zonotope represents the set
//!
//! ```text
//!   P = { c + sum_i  g_i * x^(a_i)  :  x in [-1, 1]^p }
//! ```
//!
//! where `c` is the center, each generator `g_i` is a vector paired with an
//! integer exponent vector `a_i` over the PZ's indeterminates, and `x^(a)`
//! means the monomial `prod_j x_j^(a_j)`. Unlike a plain zonotope, generators
//! sharing indeterminates are *dependent*, so polynomial maps of the same
//! underlying variables stay exactly correlated through arithmetic. That is
//! what lets a reachable set be sliced at a concrete trajectory parameter
//! after the fact.
//!
//! Canonical form, maintained by every operation:
//! - indeterminate ids sorted, none unused;
//! - generators sorted by exponent vector, exponent vectors unique
//!   (duplicates merged by coefficient addition);
//! - no all-zero exponent generator (folded into the center) and no all-zero
//!   coefficient generator.
//!
//! Matrix-valued sets are handled by [`PzMat`], which flattens entries
//! row-major into one `PolyZonotope` so that generator coefficients are whole
//! matrices and products distribute exactly.

mod kdep;
mod mat;
mod taylor;

pub use kdep::Bound;
pub use mat::{pz_cross, pz_dot, pz_mul_scalar, pz_pow, PzMat};
pub use taylor::{pz_taylor, Cos, Sin, TaylorSeries};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde_json::json;
use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error, PartialEq)]
pub enum PzError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("slice value {value} for {id:?} outside [-1, 1]")]
    SliceRange { id: IndetId, value: f64 },
    #[error("no assignment provided for indeterminate {0:?}")]
    MissingAssignment(IndetId),
    #[error("duplicate indeterminate id {0:?}")]
    IdCollision(IndetId),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("series diverged: non-finite value in Taylor enclosure")]
    Divergence,
}

/// Identity of one indeterminate. Equality is structural, so any two sets
/// referring to `Time(3)` share that variable by construction. `Fresh` ids
/// come from a global atomic counter and are never reused within a process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndetId {
    /// Time within grid segment `i`.
    Time(u32),
    /// Trajectory parameter of joint `j`; the sliceable decision variables.
    Param(u32),
    /// Normalized position tracking error of joint `j`.
    ErrPos(u32),
    /// Normalized velocity tracking error of joint `j`.
    ErrVel(u32),
    /// Robust-input buffer of joint `j`.
    Robust(u32),
    /// Anonymous independent variable (Taylor remainders, boxed generators,
    /// interval conversions).
    Fresh(u64),
}

static FRESH_COUNTER: AtomicU64 = AtomicU64::new(0);

impl IndetId {
    /// Allocates a process-unique anonymous id. Safe to call concurrently.
    pub fn fresh() -> Self {
        IndetId::Fresh(FRESH_COUNTER.fetch_add(1, Ordering::Relaxed))
    }

    pub fn is_param(&self) -> bool {
        matches!(self, IndetId::Param(_))
    }

    fn label(&self) -> String {
        match self {
            IndetId::Time(i) => format!("t{i}"),
            IndetId::Param(j) => format!("k{j}"),
            IndetId::ErrPos(j) => format!("ep{j}"),
            IndetId::ErrVel(j) => format!("ev{j}"),
            IndetId::Robust(j) => format!("v{j}"),
            IndetId::Fresh(n) => format!("f{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    /// Coefficient vector, length = `dim` of the owning PZ.
    pub coeff: Vec<f64>,
    /// Exponent per indeterminate, parallel to the owning PZ's id list.
    pub expo: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyZonotope {
    dim: usize,
    ids: Vec<IndetId>,
    center: Vec<f64>,
    gens: Vec<Generator>,
}

impl PolyZonotope {
    /// Degenerate set holding a single point.
    pub fn constant(center: Vec<f64>) -> Self {
        Self {
            dim: center.len(),
            ids: Vec::new(),
            center,
            gens: Vec::new(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    /// Scalar PZ equal to the bare indeterminate `id` (center 0, coefficient 1).
    pub fn indeterminate(id: IndetId) -> Self {
        Self {
            dim: 1,
            ids: vec![id],
            center: vec![0.0],
            gens: vec![Generator {
                coeff: vec![1.0],
                expo: vec![1],
            }],
        }
    }

    /// Scalar PZ covering `iv` exactly, driven by the given indeterminate:
    /// center = midpoint, one degree-one generator = radius.
    pub fn from_interval(iv: Interval, id: IndetId) -> Self {
        if iv.radius() == 0.0 {
            return Self::constant(vec![iv.midpoint()]);
        }
        Self {
            dim: 1,
            ids: vec![id],
            center: vec![iv.midpoint()],
            gens: vec![Generator {
                coeff: vec![iv.radius()],
                expo: vec![1],
            }],
        }
    }

    /// Vector PZ covering the box given by `ivs`, one fresh indeterminate per
    /// dimension of nonzero width.
    pub fn from_intervals_fresh(ivs: &[Interval]) -> Self {
        let dim = ivs.len();
        let center = ivs.iter().map(|iv| iv.midpoint()).collect();
        let mut out = Self {
            dim,
            ids: Vec::new(),
            center,
            gens: Vec::new(),
        };
        for (d, iv) in ivs.iter().enumerate() {
            if iv.radius() > 0.0 {
                let id = IndetId::fresh();
                out.ids.push(id);
                let mut coeff = vec![0.0; dim];
                coeff[d] = iv.radius();
                let mut expo = vec![0; out.ids.len()];
                expo[out.ids.len() - 1] = 1;
                out.gens.push(Generator { coeff, expo });
            }
        }
        // pad earlier generators to the final id count
        let p = out.ids.len();
        for g in &mut out.gens {
            g.expo.resize(p, 0);
        }
        out.normalize();
        out
    }

    /// General constructor; ids may arrive unsorted, generators unmerged.
    pub fn new(
        center: Vec<f64>,
        ids: Vec<IndetId>,
        gens: Vec<(Vec<f64>, Vec<u32>)>,
    ) -> Result<Self, PzError> {
        let dim = center.len();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(PzError::IdCollision(w[0]));
            }
        }
        let mut sorted: Vec<IndetId> = ids.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(PzError::IdCollision(w[0]));
            }
        }
        let remap: Vec<usize> = ids
            .iter()
            .map(|id| sorted.binary_search(id).unwrap())
            .collect();
        let mut out_gens = Vec::with_capacity(gens.len());
        for (coeff, expo) in gens {
            if coeff.len() != dim {
                return Err(PzError::DimMismatch {
                    expected: dim,
                    got: coeff.len(),
                });
            }
            if expo.len() != ids.len() {
                return Err(PzError::DimMismatch {
                    expected: ids.len(),
                    got: expo.len(),
                });
            }
            if !coeff.iter().all(|c| c.is_finite()) {
                return Err(PzError::Invalid("non-finite coefficient".into()));
            }
            let mut new_expo = vec![0u32; sorted.len()];
            for (orig, &target) in remap.iter().enumerate() {
                new_expo[target] = expo[orig];
            }
            out_gens.push(Generator {
                coeff,
                expo: new_expo,
            });
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(PzError::Invalid("non-finite center".into()));
        }
        let mut pz = Self {
            dim,
            ids: sorted,
            center,
            gens: out_gens,
        };
        pz.normalize();
        Ok(pz)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[IndetId] {
        &self.ids
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn generators(&self) -> &[Generator] {
        &self.gens
    }

    pub fn n_generators(&self) -> usize {
        self.gens.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.gens.is_empty()
    }

    /// Restores canonical form: merge duplicate exponents, fold constant
    /// generators into the center, drop zero generators and unused ids.
    fn normalize(&mut self) {
        self.gens
            .sort_unstable_by(|a, b| a.expo.cmp(&b.expo));
        let mut merged: Vec<Generator> = Vec::with_capacity(self.gens.len());
        for g in self.gens.drain(..) {
            match merged.last_mut() {
                Some(last) if last.expo == g.expo => {
                    for (a, b) in last.coeff.iter_mut().zip(&g.coeff) {
                        *a += b;
                    }
                }
                _ => merged.push(g),
            }
        }
        merged.retain_mut(|g| {
            if g.expo.iter().all(|&e| e == 0) {
                for (c, add) in self.center.iter_mut().zip(&g.coeff) {
                    *c += add;
                }
                return false;
            }
            g.coeff.iter().any(|&c| c != 0.0)
        });
        self.gens = merged;
        // drop ids that no generator uses
        let p = self.ids.len();
        let mut used = vec![false; p];
        for g in &self.gens {
            for (u, &e) in used.iter_mut().zip(&g.expo) {
                *u |= e > 0;
            }
        }
        if used.iter().all(|&u| u) {
            return;
        }
        let keep: Vec<usize> = (0..p).filter(|&i| used[i]).collect();
        self.ids = keep.iter().map(|&i| self.ids[i]).collect();
        for g in &mut self.gens {
            g.expo = keep.iter().map(|&i| g.expo[i]).collect();
        }
    }

    /// Merges the id lists of two PZs; returns (union, remap_a, remap_b).
    fn merge_ids(a: &[IndetId], b: &[IndetId]) -> (Vec<IndetId>, Vec<usize>, Vec<usize>) {
        let mut union: Vec<IndetId> = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) => {
                    if x <= y {
                        i += 1;
                        if x == y {
                            j += 1;
                        }
                        x
                    } else {
                        j += 1;
                        y
                    }
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            union.push(next);
        }
        let remap = |ids: &[IndetId]| -> Vec<usize> {
            ids.iter()
                .map(|id| union.binary_search(id).unwrap())
                .collect()
        };
        (union.clone(), remap(a), remap(b))
    }

    fn remap_expo(expo: &[u32], map: &[usize], p: usize) -> Vec<u32> {
        let mut out = vec![0u32; p];
        for (orig, &target) in map.iter().enumerate() {
            out[target] = expo[orig];
        }
        out
    }

    /// Sum of two PZs. Generators with equal exponents merge, so this is the
    /// dependent (exact polynomial) sum where indeterminates are shared and
    /// the Minkowski sum where they are not.
    pub fn add(&self, other: &Self) -> Result<Self, PzError> {
        if self.dim != other.dim {
            return Err(PzError::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let (union, map_a, map_b) = Self::merge_ids(&self.ids, &other.ids);
        let p = union.len();
        let mut gens = Vec::with_capacity(self.gens.len() + other.gens.len());
        for g in &self.gens {
            gens.push(Generator {
                coeff: g.coeff.clone(),
                expo: Self::remap_expo(&g.expo, &map_a, p),
            });
        }
        for g in &other.gens {
            gens.push(Generator {
                coeff: g.coeff.clone(),
                expo: Self::remap_expo(&g.expo, &map_b, p),
            });
        }
        let center = self
            .center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| a + b)
            .collect();
        let mut out = Self {
            dim: self.dim,
            ids: union,
            center,
            gens,
        };
        out.normalize();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PzError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self {
            dim: self.dim,
            ids: self.ids.clone(),
            center: self.center.iter().map(|c| c * s).collect(),
            gens: self
                .gens
                .iter()
                .map(|g| Generator {
                    coeff: g.coeff.iter().map(|c| c * s).collect(),
                    expo: g.expo.clone(),
                })
                .collect(),
        };
        out.normalize();
        out
    }

    pub fn add_const(&self, delta: &[f64]) -> Result<Self, PzError> {
        if delta.len() != self.dim {
            return Err(PzError::DimMismatch {
                expected: self.dim,
                got: delta.len(),
            });
        }
        let mut out = self.clone();
        for (c, d) in out.center.iter_mut().zip(delta) {
            *c += d;
        }
        Ok(out)
    }

    /// Stacks scalar/vector PZs into one vector PZ (exact).
    pub fn stack(parts: &[&PolyZonotope]) -> Self {
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut center = Vec::with_capacity(dim);
        for p in parts {
            center.extend_from_slice(&p.center);
        }
        let mut out = Self {
            dim,
            ids: Vec::new(),
            center,
            gens: Vec::new(),
        };
        let mut offset = 0;
        for p in parts {
            let (union, map_out, map_p) = Self::merge_ids(&out.ids, &p.ids);
            let pu = union.len();
            for g in &mut out.gens {
                g.expo = Self::remap_expo(&g.expo, &map_out, pu);
            }
            for g in &p.gens {
                let mut coeff = vec![0.0; dim];
                coeff[offset..offset + p.dim].copy_from_slice(&g.coeff);
                out.gens.push(Generator {
                    coeff,
                    expo: Self::remap_expo(&g.expo, &map_p, pu),
                });
            }
            out.ids = union;
            offset += p.dim;
        }
        out.normalize();
        out
    }

    /// Projects onto the given coordinates (exact).
    pub fn project(&self, dims: &[usize]) -> Result<Self, PzError> {
        for &d in dims {
            if d >= self.dim {
                return Err(PzError::DimMismatch {
                    expected: self.dim,
                    got: d,
                });
            }
        }
        let mut out = Self {
            dim: dims.len(),
            ids: self.ids.clone(),
            center: dims.iter().map(|&d| self.center[d]).collect(),
            gens: self
                .gens
                .iter()
                .map(|g| Generator {
                    coeff: dims.iter().map(|&d| g.coeff[d]).collect(),
                    expo: g.expo.clone(),
                })
                .collect(),
        };
        out.normalize();
        Ok(out)
    }

    /// Substitutes concrete values in `[-1, 1]` for a subset of
    /// indeterminates; remaining indeterminates stay symbolic.
    pub fn slice(&self, assignments: &[(IndetId, f64)]) -> Result<Self, PzError> {
        let mut sigma: BTreeMap<IndetId, f64> = BTreeMap::new();
        for &(id, v) in assignments {
            if !(-1.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(PzError::SliceRange { id, value: v });
            }
            sigma.insert(id, v);
        }
        let cols: Vec<Option<f64>> = self.ids.iter().map(|id| sigma.get(id).copied()).collect();
        if cols.iter().all(|c| c.is_none()) {
            return Ok(self.clone());
        }
        let mut out = Self {
            dim: self.dim,
            ids: self.ids.clone(),
            center: self.center.clone(),
            gens: Vec::with_capacity(self.gens.len()),
        };
        for g in &self.gens {
            let mut factor = 1.0;
            let mut expo = g.expo.clone();
            for (idx, col) in cols.iter().enumerate() {
                if let Some(v) = col {
                    factor *= v.powi(g.expo[idx] as i32);
                    expo[idx] = 0;
                }
            }
            if factor == 0.0 {
                continue;
            }
            out.gens.push(Generator {
                coeff: g.coeff.iter().map(|c| c * factor).collect(),
                expo,
            });
        }
        out.normalize();
        Ok(out)
    }

    /// Componentwise lower/upper bounds: `center -+ sum_i |g_i|`. Every
    /// monomial is relaxed to `[-1, 1]`, which keeps the bound conservative
    /// and cheap; see [`PolyZonotope::bounds_tight`] for the variant that
    /// exploits even exponents.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.center.clone();
        let mut hi = self.center.clone();
        for g in &self.gens {
            for d in 0..self.dim {
                let a = g.coeff[d].abs();
                lo[d] -= a;
                hi[d] += a;
            }
        }
        (lo, hi)
    }

    /// Like [`PolyZonotope::bounds`] but monomials whose exponents are all
    /// even are relaxed to `[0, 1]` instead of `[-1, 1]`. Never looser.
    pub fn bounds_tight(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.center.clone();
        let mut hi = self.center.clone();
        for g in &self.gens {
            let all_even = g.expo.iter().all(|&e| e % 2 == 0);
            for d in 0..self.dim {
                let c = g.coeff[d];
                if all_even {
                    lo[d] += c.min(0.0);
                    hi[d] += c.max(0.0);
                } else {
                    lo[d] -= c.abs();
                    hi[d] += c.abs();
                }
            }
        }
        (lo, hi)
    }

    /// Scalar bounds as an [`Interval`]; the PZ must be one-dimensional.
    pub fn bounds_scalar(&self) -> Interval {
        debug_assert_eq!(self.dim, 1);
        let (lo, hi) = self.bounds();
        Interval::new(lo[0], hi[0]).expect("finite bounds")
    }

    /// Evaluates the polynomial map at a full assignment of indeterminates.
    /// Every id of the PZ must be assigned; values must lie in `[-1, 1]`.
    pub fn eval(&self, assignment: &dyn Fn(IndetId) -> Option<f64>) -> Result<Vec<f64>, PzError> {
        let mut vals = Vec::with_capacity(self.ids.len());
        for &id in &self.ids {
            let v = assignment(id).ok_or(PzError::MissingAssignment(id))?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(PzError::SliceRange { id, value: v });
            }
            vals.push(v);
        }
        let mut out = self.center.clone();
        for g in &self.gens {
            let mut mono = 1.0;
            for (idx, &e) in g.expo.iter().enumerate() {
                if e > 0 {
                    mono *= vals[idx].powi(e as i32);
                }
            }
            for d in 0..self.dim {
                out[d] += g.coeff[d] * mono;
            }
        }
        Ok(out)
    }

    /// Canonical JSON description of the internals for golden-file tests.
    /// Fresh ids are renumbered in order of first appearance so the output
    /// does not depend on global allocator state.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let mut fresh_names: BTreeMap<u64, usize> = BTreeMap::new();
        for id in &self.ids {
            if let IndetId::Fresh(n) = id {
                let next = fresh_names.len();
                fresh_names.entry(*n).or_insert(next);
            }
        }
        let name = |id: &IndetId| -> String {
            match id {
                IndetId::Fresh(n) => format!("f{}", fresh_names[n]),
                other => other.label(),
            }
        };
        json!({
            "dim": self.dim,
            "ids": self.ids.iter().map(name).collect::<Vec<_>>(),
            "center": self.center,
            "generators": self.gens.iter().map(|g| json!({
                "coeff": g.coeff,
                "expo": g.expo,
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn assignment_map(
        pz: &PolyZonotope,
        rng: &mut SmallRng,
    ) -> Vec<(IndetId, f64)> {
        pz.ids()
            .iter()
            .map(|&id| (id, rng.gen_range(-1.0..=1.0)))
            .collect()
    }

    pub(crate) fn eval_with(pz: &PolyZonotope, assign: &[(IndetId, f64)]) -> Vec<f64> {
        pz.eval(&|id| assign.iter().find(|(i, _)| *i == id).map(|(_, v)| *v))
            .unwrap()
    }

    fn scalar_with(id: IndetId, center: f64, coeffs: &[(f64, u32)]) -> PolyZonotope {
        PolyZonotope::new(
            vec![center],
            vec![id],
            coeffs
                .iter()
                .map(|&(c, e)| (vec![c], vec![e]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn interval_conversion_round_trip() {
        let iv = Interval::new(-1.0, 3.0).unwrap();
        let pz = PolyZonotope::from_interval(iv, IndetId::Time(1));
        assert_eq!(pz.center(), &[1.0]);
        assert_eq!(pz.n_generators(), 1);
        let b = pz.bounds_scalar();
        assert_eq!((b.lo(), b.hi()), (-1.0, 3.0));
    }

    #[test]
    fn merge_on_equal_exponents() {
        let a = scalar_with(IndetId::Param(0), 0.0, &[(2.0, 1)]);
        let b = scalar_with(IndetId::Param(0), 1.0, &[(3.0, 1)]);
        let s = a.add(&b).unwrap();
        assert_eq!(s.n_generators(), 1);
        assert_eq!(s.generators()[0].coeff, vec![5.0]);
        assert_eq!(s.center(), &[1.0]);
        // exact cancellation drops the generator and its id
        let t = a.add(&a.neg()).unwrap();
        assert!(t.is_degenerate());
        assert!(t.ids().is_empty());
    }

    #[test]
    fn degenerate_ops_behave_as_points() {
        let a = PolyZonotope::constant(vec![2.0, -1.0]);
        let b = PolyZonotope::constant(vec![0.5, 4.0]);
        let s = a.add(&b).unwrap();
        assert_eq!(s.center(), &[2.5, 3.0]);
        assert!(s.is_degenerate());
    }

    #[test]
    fn id_collision_rejected() {
        let r = PolyZonotope::new(
            vec![0.0],
            vec![IndetId::Param(0), IndetId::Param(0)],
            vec![(vec![1.0], vec![1, 0])],
        );
        assert!(matches!(r, Err(PzError::IdCollision(_))));
    }

    #[test]
    fn slice_substitutes_and_folds() {
        // P = 1 + 2*k0 + 3*k0*t1 over ids (t1, k0)
        let pz = PolyZonotope::new(
            vec![1.0],
            vec![IndetId::Time(1), IndetId::Param(0)],
            vec![
                (vec![2.0], vec![0, 1]),
                (vec![3.0], vec![1, 1]),
            ],
        )
        .unwrap();
        let s = pz.slice(&[(IndetId::Param(0), 0.5)]).unwrap();
        // center 1 + 2*0.5 = 2, generator 1.5 * t1
        assert_eq!(s.center(), &[2.0]);
        assert_eq!(s.n_generators(), 1);
        assert_eq!(s.generators()[0].coeff, vec![1.5]);
        // slicing at zero kills parameter-dependent generators entirely
        let z = pz.slice(&[(IndetId::Param(0), 0.0)]).unwrap();
        assert!(z.is_degenerate());
        assert_eq!(z.center(), &[1.0]);
        // out-of-range slice value
        assert!(matches!(
            pz.slice(&[(IndetId::Param(0), 1.5)]),
            Err(PzError::SliceRange { .. })
        ));
    }

    #[test]
    fn slice_commutes_with_eval() {
        let mut rng = SmallRng::seed_from_u64(99);
        for _ in 0..200 {
            let pz = random_pz(&mut rng, 2, 3);
            let assign = assignment_map(&pz, &mut rng);
            let direct = eval_with(&pz, &assign);
            // slice the first half of the ids, then eval the rest
            let n_half = assign.len() / 2;
            let sliced = pz.slice(&assign[..n_half]).unwrap();
            let via_slice = eval_with(&sliced, &assign[n_half..]);
            for (a, b) in direct.iter().zip(&via_slice) {
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bounds_contain_samples_and_tight_is_never_looser() {
        let mut rng = SmallRng::seed_from_u64(5);
        for _ in 0..200 {
            let pz = random_pz(&mut rng, 3, 4);
            let (lo, hi) = pz.bounds();
            let (tlo, thi) = pz.bounds_tight();
            for d in 0..pz.dim() {
                assert!(tlo[d] >= lo[d] - 1e-12 && thi[d] <= hi[d] + 1e-12);
            }
            for _ in 0..50 {
                let assign = assignment_map(&pz, &mut rng);
                let x = eval_with(&pz, &assign);
                for d in 0..pz.dim() {
                    let slack = 1e-11 * (1.0 + x[d].abs());
                    assert!(tlo[d] - slack <= x[d] && x[d] <= thi[d] + slack);
                }
            }
        }
    }

    #[test]
    fn even_exponent_bound_is_tighter() {
        // P = 0 + 1 * k0^2: range is [0, 1], conservative bound is [-1, 1]
        let pz = scalar_with(IndetId::Param(0), 0.0, &[(1.0, 2)]);
        let (lo, hi) = pz.bounds();
        assert_eq!((lo[0], hi[0]), (-1.0, 1.0));
        let (tlo, thi) = pz.bounds_tight();
        assert_eq!((tlo[0], thi[0]), (0.0, 1.0));
    }

    #[test]
    fn stack_and_project_are_exact() {
        let mut rng = SmallRng::seed_from_u64(17);
        let a = random_pz(&mut rng, 2, 3);
        let b = random_pz(&mut rng, 1, 2);
        let st = PolyZonotope::stack(&[&a, &b]);
        assert_eq!(st.dim(), 3);
        let assign = assignment_map(&st, &mut rng);
        let full = eval_with(&st, &assign);
        let pa = eval_with(&a, &assign);
        let pb = eval_with(&b, &assign);
        assert_eq!(&full[..2], &pa[..]);
        assert_eq!(&full[2..], &pb[..]);
        let back = st.project(&[2]).unwrap();
        let pv = eval_with(&back, &assign);
        assert_eq!(pv, pb);
    }

    #[test]
    fn debug_json_is_canonical() {
        let pz = PolyZonotope::new(
            vec![1.0, 2.0],
            vec![IndetId::Param(0), IndetId::Time(1)],
            vec![(vec![0.5, 0.0], vec![2, 1]), (vec![0.0, -1.0], vec![0, 1])],
        )
        .unwrap();
        let expected = serde_json::json!({
            "dim": 2,
            "ids": ["t1", "k0"],
            "center": [1.0, 2.0],
            "generators": [
                {"coeff": [0.0, -1.0], "expo": [1, 0]},
                {"coeff": [0.5, 0.0], "expo": [1, 2]},
            ],
        });
        assert_eq!(pz.to_debug_json(), expected);
    }

    pub(crate) fn random_pz(rng: &mut SmallRng, dim: usize, n_ids: usize) -> PolyZonotope {
        let pool = [
            IndetId::Time(1),
            IndetId::Param(0),
            IndetId::Param(1),
            IndetId::ErrPos(0),
            IndetId::ErrVel(1),
            IndetId::Robust(0),
        ];
        let mut ids: Vec<IndetId> = Vec::new();
        while ids.len() < n_ids {
            let id = pool[rng.gen_range(0..pool.len())];
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let n_gens = rng.gen_range(1..6);
        let gens = (0..n_gens)
            .map(|_| {
                (
                    (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    (0..n_ids).map(|_| rng.gen_range(0..3u32)).collect(),
                )
            })
            .collect();
        let center = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        PolyZonotope::new(center, ids, gens).unwrap()
    }
}

//! Matrix-valued polynomial zonotopes and bilinear operations.
//!
//! A [`PzMat`] flattens an `rows x cols` matrix set row-major into a single
//! [`PolyZonotope`] of dimension `rows * cols`. Products then distribute over
//! generators exactly: every pair of one left and one right term contributes
//! the matrix product of their coefficients under the sum of their exponents.

use super::{Generator, PolyZonotope, PzError};
use crate::interval::IntervalMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct PzMat {
    rows: usize,
    cols: usize,
    data: PolyZonotope,
}

impl PzMat {
    pub fn from_pz(pz: PolyZonotope, rows: usize, cols: usize) -> Result<Self, PzError> {
        if pz.dim() != rows * cols {
            return Err(PzError::DimMismatch {
                expected: rows * cols,
                got: pz.dim(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: pz,
        })
    }

    /// Column vector view of a vector PZ.
    pub fn col(pz: PolyZonotope) -> Self {
        Self {
            rows: pz.dim(),
            cols: 1,
            data: pz,
        }
    }

    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            data: PolyZonotope::constant(entries.to_vec()),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        Self::from_real(n, n, &e)
    }

    /// Degenerate-or-not conversion of an interval matrix, one fresh
    /// indeterminate per entry of nonzero width.
    pub fn from_interval_matrix(m: &IntervalMatrix) -> Self {
        let pz = PolyZonotope::from_intervals_fresh(m.entries());
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: pz,
        }
    }

    /// Builds a matrix from scalar PZ entries in row-major order (exact).
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: &[&PolyZonotope],
    ) -> Result<Self, PzError> {
        if entries.len() != rows * cols {
            return Err(PzError::DimMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        for e in entries {
            if e.dim() != 1 {
                return Err(PzError::DimMismatch {
                    expected: 1,
                    got: e.dim(),
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            data: PolyZonotope::stack(entries),
        })
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

    pub fn as_pz(&self) -> &PolyZonotope {
        &self.data
    }

    pub fn into_pz(self) -> PolyZonotope {
        self.data
    }

    /// Scalar PZ of entry `(i, j)` (exact projection).
    pub fn entry(&self, i: usize, j: usize) -> PolyZonotope {
        self.data
            .project(&[i * self.cols + j])
            .expect("entry index in range")
    }

    pub fn transpose(&self) -> Self {
        let perm: Vec<usize> = (0..self.cols * self.rows)
            .map(|idx| {
                let (j, i) = (idx / self.rows, idx % self.rows);
                i * self.cols + j
            })
            .collect();
        Self {
            rows: self.cols,
            cols: self.rows,
            data: self.data.project(&perm).expect("permutation in range"),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, PzError> {
        if self.shape() != other.shape() {
            return Err(PzError::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.add(&other.data)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PzError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.scale(s),
        }
    }

    /// Matrix product; generator pairs multiply as matrices and their
    /// exponents add.
    pub fn matmul(&self, other: &Self) -> Result<Self, PzError> {
        if self.cols != other.rows {
            return Err(PzError::ShapeMismatch {
                expected: (self.cols, other.cols),
                got: other.shape(),
            });
        }
        let (r, m, c) = (self.rows, self.cols, other.cols);
        let data = bilinear(&self.data, &other.data, r * c, &|a, b, out| {
            for i in 0..r {
                for j in 0..c {
                    let mut acc = 0.0;
                    for l in 0..m {
                        acc += a[i * m + l] * b[l * c + j];
                    }
                    out[i * c + j] = acc;
                }
            }
        });
        Ok(Self { rows: r, cols: c, data })
    }

    /// Matrix times vector PZ.
    pub fn matvec(&self, v: &PolyZonotope) -> Result<PolyZonotope, PzError> {
        if v.dim() != self.cols {
            return Err(PzError::DimMismatch {
                expected: self.cols,
                got: v.dim(),
            });
        }
        let (r, m) = (self.rows, self.cols);
        Ok(bilinear(&self.data, v, r, &|a, b, out| {
            for i in 0..r {
                let mut acc = 0.0;
                for l in 0..m {
                    acc += a[i * m + l] * b[l];
                }
                out[i] = acc;
            }
        }))
    }

    /// Skew matrix `[0,-a3,a2; a3,0,-a1; -a2,a1,0]` of a 3-dimensional PZ;
    /// linear in the argument, hence exact.
    pub fn skew(v: &PolyZonotope) -> Result<Self, PzError> {
        if v.dim() != 3 {
            return Err(PzError::DimMismatch {
                expected: 3,
                got: v.dim(),
            });
        }
        let sk = |a: &[f64]| -> Vec<f64> {
            vec![
                0.0, -a[2], a[1], //
                a[2], 0.0, -a[0], //
                -a[1], a[0], 0.0,
            ]
        };
        let mut out = PolyZonotope {
            dim: 9,
            ids: v.ids.clone(),
            center: sk(&v.center),
            gens: v
                .gens
                .iter()
                .map(|g| Generator {
                    coeff: sk(&g.coeff),
                    expo: g.expo.clone(),
                })
                .collect(),
        };
        out.normalize();
        Ok(Self {
            rows: 3,
            cols: 3,
            data: out,
        })
    }
}

/// Cross product of 3-dimensional PZs via the skew matrix of the left factor.
pub fn pz_cross(a: &PolyZonotope, b: &PolyZonotope) -> Result<PolyZonotope, PzError> {
    PzMat::skew(a)?.matvec(b)
}

/// Product of a vector (or scalar) PZ with a scalar PZ.
pub fn pz_mul_scalar(v: &PolyZonotope, s: &PolyZonotope) -> Result<PolyZonotope, PzError> {
    if s.dim() != 1 {
        return Err(PzError::DimMismatch {
            expected: 1,
            got: s.dim(),
        });
    }
    let dim = v.dim();
    Ok(bilinear(v, s, dim, &|a, b, out| {
        for d in 0..dim {
            out[d] = a[d] * b[0];
        }
    }))
}

/// Integer power of a scalar PZ; `n = 0` yields the constant one.
pub fn pz_pow(s: &PolyZonotope, n: u32) -> Result<PolyZonotope, PzError> {
    if s.dim() != 1 {
        return Err(PzError::DimMismatch {
            expected: 1,
            got: s.dim(),
        });
    }
    let mut acc = PolyZonotope::constant(vec![1.0]);
    for _ in 0..n {
        acc = pz_mul_scalar(&acc, s)?;
    }
    Ok(acc)
}

/// Dot product of two vector PZs of equal dimension.
pub fn pz_dot(a: &PolyZonotope, b: &PolyZonotope) -> Result<PolyZonotope, PzError> {
    if a.dim() != b.dim() {
        return Err(PzError::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let n = a.dim();
    Ok(bilinear(a, b, 1, &|x, y, out| {
        out[0] = (0..n).map(|i| x[i] * y[i]).sum();
    }))
}

/// Distributes a bilinear coefficient map over all term pairs (centers count
/// as zero-exponent terms); exponents add. The result is normalized, so
/// duplicate exponents merge.
fn bilinear(
    a: &PolyZonotope,
    b: &PolyZonotope,
    out_dim: usize,
    combine: &dyn Fn(&[f64], &[f64], &mut [f64]),
) -> PolyZonotope {
    let (union, map_a, map_b) = PolyZonotope::merge_ids(&a.ids, &b.ids);
    let p = union.len();
    let zero_expo = vec![0u32; p];

    let terms = |pz: &PolyZonotope, map: &[usize]| -> Vec<(Vec<f64>, Vec<u32>)> {
        let mut t = Vec::with_capacity(pz.gens.len() + 1);
        t.push((pz.center.clone(), zero_expo.clone()));
        for g in &pz.gens {
            t.push((g.coeff.clone(), PolyZonotope::remap_expo(&g.expo, map, p)));
        }
        t
    };
    let ta = terms(a, &map_a);
    let tb = terms(b, &map_b);

    let mut gens: Vec<Generator> = Vec::with_capacity(ta.len() * tb.len());
    let mut coeff = vec![0.0; out_dim];
    for (ca, ea) in &ta {
        for (cb, eb) in &tb {
            combine(ca, cb, &mut coeff);
            if coeff.iter().all(|&c| c == 0.0) {
                continue;
            }
            let expo: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            gens.push(Generator {
                coeff: std::mem::replace(&mut coeff, vec![0.0; out_dim]),
                expo,
            });
        }
    }
    let mut out = PolyZonotope {
        dim: out_dim,
        ids: union,
        center: vec![0.0; out_dim],
        gens,
    };
    out.normalize();
    out
}

#[cfg(test)]
mod tests {
    use super::super::tests::{assignment_map, eval_with, random_pz};
    use super::super::IndetId;
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    #[test]
    fn matmul_matches_sampled_real_product() {
        let mut rng = SmallRng::seed_from_u64(23);
        for _ in 0..100 {
            let a = PzMat::from_pz(random_pz(&mut rng, 6, 3), 2, 3).unwrap();
            let b = PzMat::from_pz(random_pz(&mut rng, 6, 3), 3, 2).unwrap();
            let prod = a.matmul(&b).unwrap();
            let assign: Vec<_> = assignment_map(prod.as_pz(), &mut rng);
            let am = eval_with(a.as_pz(), &assign);
            let bm = eval_with(b.as_pz(), &assign);
            let pm = eval_with(prod.as_pz(), &assign);
            for i in 0..2 {
                for j in 0..2 {
                    let real: f64 = (0..3).map(|l| am[i * 3 + l] * bm[l * 2 + j]).sum();
                    let got = pm[i * 2 + j];
                    assert!(
                        (real - got).abs() < 1e-10 * (1.0 + real.abs()),
                        "{real} vs {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn cross_and_dot_match_samples() {
        let mut rng = SmallRng::seed_from_u64(29);
        for _ in 0..100 {
            let a = random_pz(&mut rng, 3, 2);
            let b = random_pz(&mut rng, 3, 3);
            let cr = pz_cross(&a, &b).unwrap();
            let dt = pz_dot(&a, &b).unwrap();
            let assign = {
                let all = PolyZonotope::stack(&[&a, &b]);
                assignment_map(&all, &mut rng)
            };
            let av = eval_with(&a, &assign);
            let bv = eval_with(&b, &assign);
            let cv = eval_with(&cr, &assign);
            let dv = eval_with(&dt, &assign);
            let real = [
                av[1] * bv[2] - av[2] * bv[1],
                av[2] * bv[0] - av[0] * bv[2],
                av[0] * bv[1] - av[1] * bv[0],
            ];
            for i in 0..3 {
                assert!((real[i] - cv[i]).abs() < 1e-10 * (1.0 + real[i].abs()));
            }
            let rdot: f64 = (0..3).map(|i| av[i] * bv[i]).sum();
            assert!((rdot - dv[0]).abs() < 1e-10 * (1.0 + rdot.abs()));
        }
    }

    #[test]
    fn pow_and_scalar_mul() {
        let s = PolyZonotope::from_interval(
            crate::interval::Interval::new(-1.0, 1.0).unwrap(),
            IndetId::Param(0),
        );
        // s = k0; s^3 should be the single generator k0^3
        let cube = pz_pow(&s, 3).unwrap();
        assert_eq!(cube.n_generators(), 1);
        assert_eq!(cube.generators()[0].expo, vec![3]);
        let one = pz_pow(&s, 0).unwrap();
        assert!(one.is_degenerate());
        assert_eq!(one.center(), &[1.0]);
    }

    #[test]
    fn transpose_and_entry() {
        let m = PzMat::from_real(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = m.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.entry(2, 0).center(), &[3.0]);
        assert_eq!(t.entry(1, 1).center(), &[5.0]);
    }

    #[test]
    fn shape_errors() {
        let a = PzMat::from_real(2, 3, &[0.0; 6]);
        let b = PzMat::from_real(2, 3, &[0.0; 6]);
        assert!(a.matmul(&b).is_err());
        assert!(a.add(&b.transpose()).is_err());
        assert!(PzMat::skew(&PolyZonotope::zero(2)).is_err());
    }
}

//! Generator reduction and differentiation with respect to the trajectory
//! parameters.
//!
//! Reduction caps the generator count by boxing the cheapest generators into
//! an axis-aligned enclosure on fresh indeterminates. Generators whose
//! exponents touch `Param` ids are exempt whenever the budget allows: slicing
//! and gradients need the polynomial dependence on the trajectory parameters
//! intact.
//!
//! Differentiation works on PZs in *k-separated* form (see
//! [`PolyZonotope::make_k_independent`]): every generator is either a pure
//! polynomial in the `Param` ids or such a polynomial times a single
//! degree-one independent id unique to that generator. Slicing at `k` then
//! gives bounds
//!
//! ```text
//!   sup(P)(k) = poly(k) + sum_m |c_m * k^(a_m)|
//!   inf(P)(k) = poly(k) - sum_m |c_m * k^(a_m)|
//! ```
//!
//! which are differentiable wherever no `c_m * k^(a_m)` sits at zero; at
//! those kinks the zero element of the subdifferential is returned.

use super::{Generator, IndetId, PolyZonotope, PzError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Sup,
    Inf,
}

impl PolyZonotope {
    /// Caps the generator count at `max_generators` plus one box generator
    /// per dimension. `Param`-dependent generators get first claim on the
    /// budget so slicing and gradients keep the dominant polynomial
    /// dependence on the trajectory parameters; within each class the
    /// largest generators by coefficient infinity-norm survive. Everything
    /// else is over-approximated by an axis-aligned box on fresh ids, so the
    /// result contains `self` for every parameter value (a boxed generator
    /// covers its whole `[-1, 1]` monomial range).
    pub fn reduce(&self, max_generators: usize) -> Self {
        if self.gens.len() <= max_generators {
            return self.clone();
        }
        let param_cols: Vec<usize> = self
            .ids
            .iter()
            .enumerate()
            .filter_map(|(i, id)| id.is_param().then_some(i))
            .collect();
        let is_protected = |g: &Generator| param_cols.iter().any(|&c| g.expo[c] > 0);

        let mut protected: Vec<usize> = Vec::new();
        let mut plain: Vec<usize> = Vec::new();
        for (i, g) in self.gens.iter().enumerate() {
            if is_protected(g) {
                protected.push(i);
            } else {
                plain.push(i);
            }
        }
        let norm = |i: usize| -> f64 {
            self.gens[i]
                .coeff
                .iter()
                .fold(0.0f64, |acc, c| acc.max(c.abs()))
        };
        // Deterministic: sort by (norm desc, original order asc).
        let by_norm = |list: &mut Vec<usize>| {
            list.sort_by(|&a, &b| norm(b).partial_cmp(&norm(a)).unwrap().then(a.cmp(&b)));
        };
        by_norm(&mut protected);
        by_norm(&mut plain);
        let n_protected = protected.len().min(max_generators);
        let n_plain = (max_generators - n_protected).min(plain.len());
        let boxed: Vec<usize> = protected[n_protected..]
            .iter()
            .chain(&plain[n_plain..])
            .copied()
            .collect();

        let mut radius = vec![0.0f64; self.dim];
        for &i in &boxed {
            for (r, c) in radius.iter_mut().zip(&self.gens[i].coeff) {
                *r += c.abs();
            }
        }

        let mut keep_idx: Vec<usize> = protected[..n_protected]
            .iter()
            .chain(&plain[..n_plain])
            .copied()
            .collect();
        keep_idx.sort_unstable();
        let mut gens: Vec<Generator> = keep_idx.iter().map(|&i| self.gens[i].clone()).collect();
        let mut ids = self.ids.clone();
        let mut extra = 0usize;
        for (d, &r) in radius.iter().enumerate() {
            if r > 0.0 {
                ids.push(IndetId::fresh());
                extra += 1;
                let mut coeff = vec![0.0; self.dim];
                coeff[d] = r;
                let mut expo = vec![0u32; ids.len()];
                expo[ids.len() - 1] = 1;
                gens.push(Generator { coeff, expo });
            }
        }
        for g in gens.iter_mut() {
            g.expo.resize(self.ids.len() + extra, 0);
        }
        // fresh ids sort after all structured ids, but re-sorting keeps the
        // canonical order even when self already had fresh ids
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&i| ids[i]);
        let sorted_ids: Vec<IndetId> = order.iter().map(|&i| ids[i]).collect();
        for g in gens.iter_mut() {
            g.expo = order.iter().map(|&i| g.expo[i]).collect();
        }
        let mut out = Self {
            dim: self.dim,
            ids: sorted_ids,
            center: self.center.clone(),
            gens,
        };
        out.normalize();
        out
    }

    /// Rewrites every generator with non-`Param` exponents so its non-param
    /// monomial is replaced by one fresh degree-one indeterminate unique to
    /// that generator. A monomial on `[-1, 1]` variables has range inside
    /// `[-1, 1]`, so the result contains `self`; the payoff is that slicing
    /// at `k` leaves only independent degree-one generators, giving the
    /// closed-form bounds documented on this module.
    pub fn make_k_independent(&self) -> Self {
        let param_cols: Vec<bool> = self.ids.iter().map(|id| id.is_param()).collect();
        let mut ids = self.ids.clone();
        let mut gens: Vec<Generator> = Vec::with_capacity(self.gens.len());
        for g in &self.gens {
            let has_nonparam = g
                .expo
                .iter()
                .zip(&param_cols)
                .any(|(&e, &is_k)| e > 0 && !is_k);
            if !has_nonparam {
                gens.push(g.clone());
                continue;
            }
            let mut expo = g.expo.clone();
            for (e, &is_k) in expo.iter_mut().zip(&param_cols) {
                if !is_k {
                    *e = 0;
                }
            }
            ids.push(IndetId::fresh());
            expo.resize(ids.len(), 0);
            *expo.last_mut().unwrap() = 1;
            gens.push(Generator {
                coeff: g.coeff.clone(),
                expo,
            });
        }
        let p = ids.len();
        for g in gens.iter_mut() {
            g.expo.resize(p, 0);
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by_key(|&i| ids[i]);
        let sorted_ids: Vec<IndetId> = order.iter().map(|&i| ids[i]).collect();
        for g in gens.iter_mut() {
            g.expo = order.iter().map(|&i| g.expo[i]).collect();
        }
        let mut out = Self {
            dim: self.dim,
            ids: sorted_ids,
            center: self.center.clone(),
            gens,
        };
        out.normalize();
        out
    }

    /// Gradient of `sup` or `inf` of the slice at `k` with respect to `k`,
    /// for a scalar PZ in k-separated form. `k` indexes `Param(j)` by `j`
    /// and every entry must lie in `[-1, 1]`.
    pub fn grad_k(&self, which: Bound, k: &[f64]) -> Result<Vec<f64>, PzError> {
        if self.dim != 1 {
            return Err(PzError::DimMismatch {
                expected: 1,
                got: self.dim,
            });
        }
        for (j, &v) in k.iter().enumerate() {
            if !(-1.0..=1.0).contains(&v) {
                return Err(PzError::SliceRange {
                    id: IndetId::Param(j as u32),
                    value: v,
                });
            }
        }
        // column roles
        let mut param_col_of: Vec<Option<usize>> = vec![None; self.ids.len()];
        for (i, id) in self.ids.iter().enumerate() {
            if let IndetId::Param(j) = id {
                let j = *j as usize;
                if j >= k.len() {
                    return Err(PzError::Invalid(format!(
                        "parameter id k{j} outside gradient dimension {}",
                        k.len()
                    )));
                }
                param_col_of[i] = Some(j);
            }
        }
        // structure check: non-param exponents must be a single degree-one id
        // unique to its generator
        let mut seen_indep = vec![false; self.ids.len()];
        for g in &self.gens {
            let mut indep: Option<usize> = None;
            for (col, &e) in g.expo.iter().enumerate() {
                if e == 0 || param_col_of[col].is_some() {
                    continue;
                }
                if e > 1 || indep.is_some() {
                    return Err(PzError::Structure(
                        "generator mixes independent ids or uses one at degree > 1; \
                         call make_k_independent first"
                            .into(),
                    ));
                }
                indep = Some(col);
            }
            if let Some(col) = indep {
                if seen_indep[col] {
                    return Err(PzError::Structure(
                        "independent id shared between generators; \
                         call make_k_independent first"
                            .into(),
                    ));
                }
                seen_indep[col] = true;
            }
        }

        let sign_for_abs = match which {
            Bound::Sup => 1.0,
            Bound::Inf => -1.0,
        };
        let mut grad = vec![0.0f64; k.len()];
        for g in &self.gens {
            let c = g.coeff[0];
            let is_abs_term = g
                .expo
                .iter()
                .enumerate()
                .any(|(col, &e)| e > 0 && param_col_of[col].is_none());
            // monomial in k and its partial derivatives
            let mut mono = 1.0f64;
            for (col, &e) in g.expo.iter().enumerate() {
                if let (Some(j), true) = (param_col_of[col], e > 0) {
                    mono *= k[j].powi(e as i32);
                }
            }
            let weight = if is_abs_term {
                let s = (c * mono).signum();
                if c * mono == 0.0 {
                    continue; // zero subgradient at the kink
                }
                sign_for_abs * s * c
            } else {
                c
            };
            for (col, &e) in g.expo.iter().enumerate() {
                let (Some(j), true) = (param_col_of[col], e > 0) else {
                    continue;
                };
                // d/dk_j of the monomial: e * k_j^(e-1) * (others)
                let mut dmono = e as f64 * k[j].powi(e as i32 - 1);
                for (col2, &e2) in g.expo.iter().enumerate() {
                    if col2 != col {
                        if let (Some(j2), true) = (param_col_of[col2], e2 > 0) {
                            dmono *= k[j2].powi(e2 as i32);
                        }
                    }
                }
                grad[j] += weight * dmono;
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{assignment_map, eval_with, random_pz};
    use super::*;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    /// Containment under reduction: realizations of the original lie within
    /// the reduced set once its surviving shared ids are sliced to match.
    #[test]
    fn reduce_is_sound_and_respects_budget() {
        let mut rng = SmallRng::seed_from_u64(53);
        for _ in 0..100 {
            let pz = random_pz(&mut rng, 3, 4);
            let budget = rng.gen_range(1..4usize);
            let red = pz.reduce(budget);
            // hard cap: the budget plus one box generator per dimension
            assert!(red.n_generators() <= budget + red.dim());
            for _ in 0..30 {
                let assign = assignment_map(&pz, &mut rng);
                let x = eval_with(&pz, &assign);
                let shared: Vec<_> = assign
                    .iter()
                    .filter(|(id, _)| red.ids().contains(id))
                    .cloned()
                    .collect();
                let sl = red.slice(&shared).unwrap();
                let (lo, hi) = sl.bounds();
                for d in 0..3 {
                    let slack = 1e-11 * (1.0 + x[d].abs());
                    assert!(
                        lo[d] - slack <= x[d] && x[d] <= hi[d] + slack,
                        "dim {d}: {} not in [{}, {}]",
                        x[d],
                        lo[d],
                        hi[d]
                    );
                }
            }
        }
    }

    #[test]
    fn reduce_protects_param_generators() {
        // two big independent generators, one tiny param generator
        let pz = PolyZonotope::new(
            vec![0.0],
            vec![IndetId::Time(1), IndetId::Param(0), IndetId::ErrPos(0)],
            vec![
                (vec![100.0], vec![2, 0, 0]),
                (vec![1e-6], vec![0, 1, 0]),
                (vec![50.0], vec![0, 0, 1]),
            ],
        )
        .unwrap();
        let red = pz.reduce(1);
        let has_param = red.generators().iter().any(|g| {
            g.expo
                .iter()
                .zip(red.ids())
                .any(|(&e, id)| e > 0 && id.is_param())
        });
        assert!(has_param, "tiny param generator must survive reduction");
    }

    #[test]
    fn reduce_noop_under_budget() {
        let mut rng = SmallRng::seed_from_u64(57);
        let pz = random_pz(&mut rng, 2, 3);
        let red = pz.reduce(100);
        assert_eq!(pz, red);
    }

    #[test]
    fn k_independent_is_sound() {
        let mut rng = SmallRng::seed_from_u64(59);
        for _ in 0..100 {
            let pz = random_pz(&mut rng, 2, 4);
            let ind = pz.make_k_independent();
            for _ in 0..30 {
                let assign = assignment_map(&pz, &mut rng);
                let x = eval_with(&pz, &assign);
                let shared: Vec<_> = assign
                    .iter()
                    .filter(|(id, _)| id.is_param())
                    .cloned()
                    .collect();
                let sl = ind.slice(&shared).unwrap();
                let (lo, hi) = sl.bounds();
                for d in 0..2 {
                    let slack = 1e-11 * (1.0 + x[d].abs());
                    assert!(lo[d] - slack <= x[d] && x[d] <= hi[d] + slack);
                }
            }
        }
    }

    /// Central finite differences of slice-then-bound match the analytic
    /// gradient away from kinks.
    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = SmallRng::seed_from_u64(61);
        let mut checked = 0;
        while checked < 60 {
            let pz = random_pz(&mut rng, 1, 4).make_k_independent();
            let n_k = 2;
            let k: Vec<f64> = (0..n_k).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let value = |kk: &[f64]| -> (f64, f64) {
                let assign: Vec<_> = (0..n_k)
                    .map(|j| (IndetId::Param(j as u32), kk[j]))
                    .collect();
                let b = pz.slice(&assign).unwrap().bounds_scalar();
                (b.lo(), b.hi())
            };
            let gs = pz.grad_k(Bound::Sup, &k).unwrap();
            let gi = pz.grad_k(Bound::Inf, &k).unwrap();
            let h = 1e-6;
            let mut kink = false;
            let mut fd_s = vec![0.0; n_k];
            let mut fd_i = vec![0.0; n_k];
            for j in 0..n_k {
                let mut kp = k.clone();
                let mut km = k.clone();
                kp[j] += h;
                km[j] -= h;
                let (lp, sp) = value(&kp);
                let (lm, sm) = value(&km);
                fd_s[j] = (sp - sm) / (2.0 * h);
                fd_i[j] = (lp - lm) / (2.0 * h);
            }
            // skip configurations where an abs term changes sign inside the
            // finite-difference stencil
            for g in pz.generators() {
                let mono: f64 = g
                    .expo
                    .iter()
                    .zip(pz.ids())
                    .filter_map(|(&e, id)| match id {
                        IndetId::Param(j) if e > 0 => Some(k[*j as usize].powi(e as i32)),
                        _ => None,
                    })
                    .product();
                let is_abs = g
                    .expo
                    .iter()
                    .zip(pz.ids())
                    .any(|(&e, id)| e > 0 && !id.is_param());
                if is_abs && (g.coeff[0] * mono).abs() < 1e-3 {
                    kink = true;
                }
            }
            if kink {
                continue;
            }
            checked += 1;
            for j in 0..n_k {
                assert!(
                    (gs[j] - fd_s[j]).abs() < 1e-5 * (1.0 + fd_s[j].abs()),
                    "sup grad {} vs fd {}",
                    gs[j],
                    fd_s[j]
                );
                assert!(
                    (gi[j] - fd_i[j]).abs() < 1e-5 * (1.0 + fd_i[j].abs()),
                    "inf grad {} vs fd {}",
                    gi[j],
                    fd_i[j]
                );
            }
        }
    }

    #[test]
    fn grad_rejects_mixed_structure() {
        // time id at degree 2 is not k-separated
        let pz = PolyZonotope::new(
            vec![0.0],
            vec![IndetId::Time(1), IndetId::Param(0)],
            vec![(vec![1.0], vec![2, 1])],
        )
        .unwrap();
        assert!(matches!(
            pz.grad_k(Bound::Sup, &[0.0]),
            Err(PzError::Structure(_))
        ));
        assert!(pz.make_k_independent().grad_k(Bound::Sup, &[0.0]).is_ok());
    }

    #[test]
    fn zero_subgradient_at_kink() {
        // P = |k0| shape: generator k0 * e (independent id), sliced bound
        // sup = |k0|; at k0 = 0 the subgradient choice is 0
        let pz = PolyZonotope::new(
            vec![0.0],
            vec![IndetId::Param(0), IndetId::ErrPos(0)],
            vec![(vec![1.0], vec![1, 1])],
        )
        .unwrap();
        let g = pz.grad_k(Bound::Sup, &[0.0]).unwrap();
        assert_eq!(g, vec![0.0]);
        let g1 = pz.grad_k(Bound::Sup, &[0.5]).unwrap();
        assert_eq!(g1, vec![1.0]);
        let g2 = pz.grad_k(Bound::Inf, &[0.5]).unwrap();
        assert_eq!(g2, vec![-1.0]);
    }
}

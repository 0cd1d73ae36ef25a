//! Constraint functions `h(k) <= 0` over the trajectory parameter, with
//! analytic gradients: joint position, velocity, and input boxes from sliced
//! reach-set bounds, and obstacle avoidance via halfspace representations of
//! obstacle zonotopes.
//!
//! Every constraint owns scalar PZs pre-processed with
//! [`PolyZonotope::make_k_independent`], so evaluation is slice-and-bound
//! and gradients come from [`PolyZonotope::grad_k`]. The collision value
//! `h = -max_f inf((A FO - b)_f at k)` uses a max over faces; its gradient
//! freezes the active face (lowest index on ties), the standard subgradient
//! choice for a max of smooth functions.

use nalgebra::{Matrix3xX, Vector3};
use thiserror::Error;

use crate::polyzono::{Bound, IndetId, PolyZonotope, PzError, PzMat};
use crate::reachsets::ReachSetBundle;
use crate::robot::{RobotModel, Zonotope3};

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("degenerate obstacle: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Pz(#[from] PzError),
}

/// Static convex obstacle: a zonotope volume plus its halfspace
/// representation `{ p : A p <= b }`.
#[derive(Clone, Debug)]
pub struct Obstacle {
    pub zonotope: Zonotope3,
    a: Vec<[f64; 3]>,
    b: Vec<f64>,
}

impl Obstacle {
    pub fn new(zonotope: Zonotope3) -> Result<Self, ConstraintError> {
        let (a, b) = obstacle_halfspaces(&zonotope)?;
        Ok(Self { zonotope, a, b })
    }

    pub fn from_box(center: [f64; 3], half_widths: [f64; 3]) -> Result<Self, ConstraintError> {
        let generators = (0..3)
            .map(|d| {
                let mut g = [0.0; 3];
                g[d] = half_widths[d];
                g
            })
            .collect();
        Self::new(Zonotope3 { center, generators })
    }

    pub fn halfspaces(&self) -> (&[[f64; 3]], &[f64]) {
        (&self.a, &self.b)
    }

    /// `max_f (a_f . p - b_f)`: negative strictly inside, zero on the
    /// boundary, positive outside.
    pub fn margin(&self, p: &Vector3<f64>) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| Vector3::from(*a).dot(p) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.margin(p) <= 0.0
    }
}

/// True when some obstacle face strictly separates the whole volume zonotope
/// from the obstacle: `min_{p in vol} a_f . p > b_f` for at least one face.
/// Sufficient for disjointness, not necessary (the faces only cut along the
/// obstacle's own normals).
pub fn zonotope_separated(vol: &Zonotope3, obs: &Obstacle) -> bool {
    let c = Vector3::from(vol.center);
    obs.a.iter().zip(&obs.b).any(|(a, b)| {
        let n = Vector3::from(*a);
        let spread: f64 = vol
            .generators
            .iter()
            .map(|g| n.dot(&Vector3::from(*g)).abs())
            .sum();
        n.dot(&c) - spread > *b
    })
}

/// Halfspace representation of a full-dimensional 3-D zonotope. Axis-aligned
/// boxes get the six `+-e_d` rows; general zonotopes get one row pair per
/// distinct facet normal, where the normals are cross products of generator
/// pairs and the offsets sum the absolute normal components of every
/// generator. Both are tight: a point satisfies all rows iff it lies in the
/// zonotope.
pub fn obstacle_halfspaces(
    z: &Zonotope3,
) -> Result<(Vec<[f64; 3]>, Vec<f64>), ConstraintError> {
    let gens: Vec<Vector3<f64>> = z.generators_v().filter(|g| g.norm() > 0.0).collect();
    if gens.len() < 3 || Matrix3xX::from_columns(&gens).rank(1e-9) < 3 {
        return Err(ConstraintError::Degenerate(
            "zonotope is flat: generators do not span 3-space".into(),
        ));
    }
    let center = z.center_v();
    let axis_aligned = gens
        .iter()
        .all(|g| g.iter().filter(|c| c.abs() > 0.0).count() == 1);
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    if axis_aligned {
        normals.extend((0..3).map(|d| {
            let mut e = Vector3::zeros();
            e[d] = 1.0;
            e
        }));
    } else {
        for i in 0..gens.len() {
            for j in i + 1..gens.len() {
                let n = gens[i].cross(&gens[j]);
                if n.norm() < 1e-12 {
                    continue;
                }
                let n = n / n.norm();
                // one row pair per facet direction
                if normals.iter().any(|m| m.cross(&n).norm() < 1e-9) {
                    continue;
                }
                normals.push(n);
            }
        }
    }
    let mut a = Vec::with_capacity(2 * normals.len());
    let mut b = Vec::with_capacity(2 * normals.len());
    for n in normals {
        let reach: f64 = gens.iter().map(|g| n.dot(g).abs()).sum();
        let nc = n.dot(&center);
        a.push([n.x, n.y, n.z]);
        b.push(nc + reach);
        a.push([-n.x, -n.y, -n.z]);
        b.push(-nc + reach);
    }
    Ok((a, b))
}

/// What a constraint protects; carries the indices needed to report it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    PositionLow { step: usize, joint: usize },
    PositionHigh { step: usize, joint: usize },
    VelocityLow { step: usize, joint: usize },
    VelocityHigh { step: usize, joint: usize },
    InputLow { step: usize, joint: usize },
    InputHigh { step: usize, joint: usize },
    Collision { step: usize, link: usize, obstacle: usize },
}

enum Form {
    /// `h = sup(pz at k) - limit`
    Upper { pz: PolyZonotope, limit: f64 },
    /// `h = limit - inf(pz at k)`
    Lower { pz: PolyZonotope, limit: f64 },
    /// `h = -max_f inf(face_f at k)`
    Faces { faces: Vec<PolyZonotope> },
}

/// One scalar constraint `h(k) <= 0` with an analytic gradient.
pub struct Constraint {
    pub kind: ConstraintKind,
    form: Form,
}

fn assignment(k: &[f64]) -> Vec<(IndetId, f64)> {
    k.iter()
        .enumerate()
        .map(|(j, &v)| (IndetId::Param(j as u32), v))
        .collect()
}

impl Constraint {
    /// `h = sup - limit`: keeps the sliced upper bound below `limit`.
    pub fn upper_bound(kind: ConstraintKind, pz: &PolyZonotope, limit: f64) -> Self {
        Self {
            kind,
            form: Form::Upper {
                pz: pz.make_k_independent(),
                limit,
            },
        }
    }

    /// `h = limit - inf`: keeps the sliced lower bound above `limit`.
    pub fn lower_bound(kind: ConstraintKind, pz: &PolyZonotope, limit: f64) -> Self {
        Self {
            kind,
            form: Form::Lower {
                pz: pz.make_k_independent(),
                limit,
            },
        }
    }

    /// Obstacle avoidance for one link's occupancy set: negative iff some
    /// obstacle face certifiably separates every sliced occupancy point.
    pub fn collision(
        kind: ConstraintKind,
        fo: &PolyZonotope,
        obstacle: &Obstacle,
    ) -> Result<Self, ConstraintError> {
        let (a, b) = obstacle.halfspaces();
        let mut faces = Vec::with_capacity(a.len());
        for (row, &off) in a.iter().zip(b) {
            let s = PzMat::from_real(1, 3, row)
                .matvec(fo)?
                .add(&PolyZonotope::constant(vec![-off]))?;
            faces.push(s.make_k_independent());
        }
        Ok(Self {
            kind,
            form: Form::Faces { faces },
        })
    }

    /// Index of the face whose sliced infimum is largest (ties to the lowest
    /// index), plus all face infima.
    fn active_face(faces: &[PolyZonotope], k: &[f64]) -> Result<(usize, Vec<f64>), PzError> {
        let assign = assignment(k);
        let mut vals = Vec::with_capacity(faces.len());
        for f in faces {
            vals.push(f.slice(&assign)?.bounds_scalar().lo());
        }
        let mut best = 0;
        for (i, &v) in vals.iter().enumerate() {
            if v > vals[best] {
                best = i;
            }
        }
        Ok((best, vals))
    }

    pub fn eval(&self, k: &[f64]) -> Result<f64, PzError> {
        match &self.form {
            Form::Upper { pz, limit } => {
                Ok(pz.slice(&assignment(k))?.bounds_scalar().hi() - limit)
            }
            Form::Lower { pz, limit } => {
                Ok(limit - pz.slice(&assignment(k))?.bounds_scalar().lo())
            }
            Form::Faces { faces } => {
                let (best, vals) = Self::active_face(faces, k)?;
                Ok(-vals[best])
            }
        }
    }

    /// Value and gradient in one pass; the collision gradient differentiates
    /// the frozen active face.
    pub fn eval_grad(&self, k: &[f64]) -> Result<(f64, Vec<f64>), PzError> {
        match &self.form {
            Form::Upper { pz, limit } => {
                let v = pz.slice(&assignment(k))?.bounds_scalar().hi() - limit;
                Ok((v, pz.grad_k(Bound::Sup, k)?))
            }
            Form::Lower { pz, limit } => {
                let v = limit - pz.slice(&assignment(k))?.bounds_scalar().lo();
                let g = pz.grad_k(Bound::Inf, k)?;
                Ok((v, g.into_iter().map(|x| -x).collect()))
            }
            Form::Faces { faces } => {
                let (best, vals) = Self::active_face(faces, k)?;
                let g = faces[best].grad_k(Bound::Inf, k)?;
                Ok((-vals[best], g.into_iter().map(|x| -x).collect()))
            }
        }
    }
}

/// Convenience wrapper: the collision value of one occupancy set against one
/// obstacle at a given parameter.
pub fn collision_constraint(
    fo: &PolyZonotope,
    obstacle: &Obstacle,
    k: &[f64],
) -> Result<f64, ConstraintError> {
    let kind = ConstraintKind::Collision {
        step: 0,
        link: 0,
        obstacle: 0,
    };
    Ok(Constraint::collision(kind, fo, obstacle)?.eval(k)?)
}

/// All constraints of a planning instance, flattened over time steps,
/// joints, links, and obstacles.
pub struct ConstraintSet {
    pub items: Vec<Constraint>,
    pub n_k: usize,
}

impl ConstraintSet {
    /// Box constraints from the buffered position/velocity sets and the
    /// input sets, plus one collision constraint per (step, link, obstacle).
    pub fn build(
        model: &RobotModel,
        bundles: &[ReachSetBundle],
        obstacles: &[Obstacle],
    ) -> Result<Self, ConstraintError> {
        let mut items = Vec::new();
        for bundle in bundles {
            let i = bundle.step;
            for j in 0..model.n_q {
                let joint = &model.joints[j];
                items.push(Constraint::lower_bound(
                    ConstraintKind::PositionLow { step: i, joint: j },
                    &bundle.buffered.q[j],
                    joint.q_lim[0],
                ));
                items.push(Constraint::upper_bound(
                    ConstraintKind::PositionHigh { step: i, joint: j },
                    &bundle.buffered.q[j],
                    joint.q_lim[1],
                ));
                items.push(Constraint::lower_bound(
                    ConstraintKind::VelocityLow { step: i, joint: j },
                    &bundle.buffered.qd[j],
                    joint.qd_lim[0],
                ));
                items.push(Constraint::upper_bound(
                    ConstraintKind::VelocityHigh { step: i, joint: j },
                    &bundle.buffered.qd[j],
                    joint.qd_lim[1],
                ));
                items.push(Constraint::lower_bound(
                    ConstraintKind::InputLow { step: i, joint: j },
                    &bundle.input.u[j],
                    joint.u_lim[0],
                ));
                items.push(Constraint::upper_bound(
                    ConstraintKind::InputHigh { step: i, joint: j },
                    &bundle.input.u[j],
                    joint.u_lim[1],
                ));
            }
            for (l, fo) in bundle.fo.iter().enumerate() {
                for (o, obs) in obstacles.iter().enumerate() {
                    items.push(Constraint::collision(
                        ConstraintKind::Collision {
                            step: i,
                            link: l,
                            obstacle: o,
                        },
                        fo,
                        obs,
                    )?);
                }
            }
        }
        Ok(Self {
            items,
            n_k: model.n_q,
        })
    }

    pub fn eval_all(&self, k: &[f64]) -> Result<Vec<f64>, PzError> {
        assert_eq!(k.len(), self.n_k);
        self.items.iter().map(|c| c.eval(k)).collect()
    }

    /// Largest constraint value; feasible iff it is `<= 0`.
    pub fn max_violation(&self, k: &[f64]) -> Result<f64, PzError> {
        Ok(self
            .eval_all(k)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerConfig;
    use crate::reachsets::{build_bundle, ReachConfig};
    use crate::trajectory::{bernstein_coeffs, InitialCondition, TimeGrid, TrajFamily};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> Obstacle {
        Obstacle::from_box([0.0; 3], [0.5; 3]).unwrap()
    }

    #[test]
    fn box_halfspaces_are_identity_rows() {
        let cube = unit_cube();
        let (a, b) = cube.halfspaces();
        assert_eq!(a.len(), 6);
        for d in 0..3 {
            let mut pos = [0.0; 3];
            pos[d] = 1.0;
            let mut neg = [0.0; 3];
            neg[d] = -1.0;
            assert!(a.contains(&pos) && a.contains(&neg));
        }
        assert!(b.iter().all(|&x| (x - 0.5).abs() < 1e-12));
        assert_relative_eq!(cube.margin(&Vector3::new(1.0, 0.0, 0.0)), 0.5);
        assert!(cube.contains(&Vector3::zeros()));
        assert!(cube.contains(&Vector3::new(0.4, 0.4, 0.4)));
        assert!(!cube.contains(&Vector3::new(0.6, 0.0, 0.0)));
    }

    #[test]
    fn general_zonotope_membership_matches_sampling() {
        let z = Zonotope3 {
            center: [0.2, -0.1, 0.3],
            generators: vec![[0.3, 0.1, 0.0], [-0.05, 0.25, 0.1], [0.1, 0.0, 0.4]],
        };
        let obs = Obstacle::new(z.clone()).unwrap();
        let gens: Vec<Vector3<f64>> = z.generators_v().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let sig: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = z.center_v() + sig.iter().zip(&gens).map(|(s, g)| *s * g).sum::<Vector3<f64>>();
            assert!(
                obs.margin(&p) <= 1e-9,
                "interior point flagged outside: margin {}",
                obs.margin(&p)
            );
            // push the coefficient vector past the unit box: outside for a
            // three-generator (parallelepiped) zonotope
            let peak = sig.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-3);
            let out: Vector3<f64> = z.center_v()
                + sig
                    .iter()
                    .zip(&gens)
                    .map(|(s, g)| 1.5 * s / peak * g)
                    .sum::<Vector3<f64>>();
            assert!(
                obs.margin(&out) > 0.0,
                "exterior point not flagged: margin {}",
                obs.margin(&out)
            );
        }
    }

    #[test]
    fn flat_zonotopes_are_rejected() {
        let two_gens = Zonotope3 {
            center: [0.0; 3],
            generators: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        };
        assert!(matches!(
            Obstacle::new(two_gens),
            Err(ConstraintError::Degenerate(_))
        ));
        let coplanar = Zonotope3 {
            center: [0.0; 3],
            generators: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
        };
        assert!(matches!(
            Obstacle::new(coplanar),
            Err(ConstraintError::Degenerate(_))
        ));
        let flat_box = Zonotope3 {
            center: [0.0; 3],
            generators: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
        };
        assert!(matches!(
            Obstacle::new(flat_box),
            Err(ConstraintError::Degenerate(_))
        ));
    }

    #[test]
    fn box_constraint_signs_and_boundary() {
        // bounds [-0.1, 0.1] against limits (-pi, pi): both sides strictly
        // negative
        let pz = PolyZonotope::from_interval(
            crate::interval::Interval::centered(0.0, 0.1),
            IndetId::Time(0),
        );
        let kind = ConstraintKind::PositionLow { step: 0, joint: 0 };
        let lo = Constraint::lower_bound(kind, &pz, -std::f64::consts::PI);
        let hi = Constraint::upper_bound(
            ConstraintKind::PositionHigh { step: 0, joint: 0 },
            &pz,
            std::f64::consts::PI,
        );
        let k: Vec<f64> = vec![];
        assert!(lo.eval(&k).unwrap() < 0.0);
        assert!(hi.eval(&k).unwrap() < 0.0);
        // sliced sup exactly at the limit: boundary value zero
        let q_hi = 2.0;
        let at_limit = PolyZonotope::from_interval(
            crate::interval::Interval::new(1.0, q_hi).unwrap(),
            IndetId::Time(0),
        );
        let h = Constraint::upper_bound(
            ConstraintKind::PositionHigh { step: 0, joint: 0 },
            &at_limit,
            q_hi,
        )
        .eval(&k)
        .unwrap();
        assert_relative_eq!(h, 0.0);
    }

    #[test]
    fn collision_point_values() {
        let cube = unit_cube();
        let outside = PolyZonotope::constant(vec![1.0, 0.0, 0.0]);
        let h = collision_constraint(&outside, &cube, &[]).unwrap();
        assert_relative_eq!(h, -0.5);
        let inside = PolyZonotope::constant(vec![0.0, 0.0, 0.0]);
        let h = collision_constraint(&inside, &cube, &[]).unwrap();
        assert_relative_eq!(h, 0.5);
    }

    fn fixture() -> (RobotModel, ControllerConfig, Vec<ReachSetBundle>, InitialCondition, TrajFamily, TimeGrid)
    {
        let model = RobotModel::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../models/two_link.json"
        ))
        .unwrap();
        let (sm, sx) = model.eigen_bounds(2000, 7, 0.05);
        let cfg = ControllerConfig::new(vec![5.0; 2], 1e-2, 1.0, sm, sx).unwrap();
        let init = InitialCondition {
            q: vec![0.3, -0.2],
            qd: vec![0.2, 0.1],
            qdd: vec![0.0, 0.0],
        };
        let family = TrajFamily::centered(&init, 1.0);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let boxed = model.interval_params();
        let bundles: Vec<ReachSetBundle> = (0..4)
            .map(|i| {
                build_bundle(
                    &model,
                    &init,
                    &family,
                    &grid,
                    i,
                    &cfg,
                    &ReachConfig::default(),
                    &model.inertia,
                    &boxed,
                )
                .unwrap()
            })
            .collect();
        (model, cfg, bundles, init, family, grid)
    }

    /// Negative box constraints imply every sampled realized position and
    /// velocity respects the joint limits.
    #[test]
    fn negative_box_constraints_are_sound() {
        let (model, cfg, bundles, init, family, grid) = fixture();
        let obstacles: Vec<Obstacle> = vec![];
        let set = ConstraintSet::build(&model, &bundles, &obstacles).unwrap();
        let k = vec![0.25, -0.5];
        let vals = set.eval_all(&k).unwrap();
        let ub = cfg.uniform_bounds();
        let traj = bernstein_coeffs(&init, &k, &family).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (c, &v) in set.items.iter().zip(&vals) {
            let (step, joint, is_vel) = match c.kind {
                ConstraintKind::PositionLow { step, joint }
                | ConstraintKind::PositionHigh { step, joint } => (step, joint, false),
                ConstraintKind::VelocityLow { step, joint }
                | ConstraintKind::VelocityHigh { step, joint } => (step, joint, true),
                _ => continue,
            };
            if v >= 0.0 {
                continue;
            }
            for _ in 0..250 {
                let t = grid.realize(step, rng.gen_range(-1.0..1.0));
                let (q_d, qd_d, _) = traj.eval(t).unwrap();
                if is_vel {
                    let qd = qd_d[joint] - ub.eps_v * rng.gen_range(-1.0..1.0);
                    let lim = model.joints[joint].qd_lim;
                    assert!(qd >= lim[0] - 1e-9 && qd <= lim[1] + 1e-9);
                } else {
                    let q = q_d[joint] - ub.eps_p[joint] * rng.gen_range(-1.0..1.0);
                    let lim = model.joints[joint].q_lim;
                    assert!(q >= lim[0] - 1e-9 && q <= lim[1] + 1e-9);
                }
            }
        }
    }

    /// A negative collision value certifies every sampled occupancy point of
    /// the sliced set lies outside the obstacle.
    #[test]
    fn negative_collision_constraint_is_sound() {
        let (model, _cfg, bundles, init, family, grid) = fixture();
        // obstacle away from the arm but close enough to be nontrivial
        let obs = Obstacle::from_box([0.9, 0.9, 0.0], [0.15, 0.15, 0.15]).unwrap();
        let k = vec![0.2, 0.1];
        let traj = bernstein_coeffs(&init, &k, &family).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut negatives = 0;
        for bundle in &bundles {
            for (l, fo) in bundle.fo.iter().enumerate() {
                let h = collision_constraint(fo, &obs, &k).unwrap();
                if h >= 0.0 {
                    continue;
                }
                negatives += 1;
                for _ in 0..250 {
                    let t = grid.realize(bundle.step, rng.gen_range(-1.0..1.0));
                    let (q_d, _, _) = traj.eval(t).unwrap();
                    // ignore the error buffer here: desired positions are a
                    // subset of the buffered position set
                    let occ = model.forward_occupancy(&q_d);
                    let vol = &occ[l];
                    let mut p = vol.center_v();
                    for g in vol.generators_v() {
                        p += rng.gen_range(-1.0..1.0) * g;
                    }
                    assert!(
                        obs.margin(&p) > -1e-9,
                        "occupancy point inside obstacle despite h = {h}"
                    );
                }
            }
        }
        assert!(negatives > 0, "fixture produced no certified-safe pairs");
    }

    /// Analytic gradients match central finite differences away from ties.
    #[test]
    fn gradients_match_finite_differences() {
        let (model, _cfg, bundles, _, _, _) = fixture();
        let obs = Obstacle::from_box([0.7, 0.5, 0.0], [0.2, 0.2, 0.2]).unwrap();
        let set = ConstraintSet::build(&model, &bundles, &[obs]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        let mut checked = 0;
        for _ in 0..8 {
            let k: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.9..0.9)).collect();
            for c in &set.items {
                let (v0, g) = c.eval_grad(&k).unwrap();
                let mut fd = vec![0.0; 2];
                let mut kinked = false;
                for j in 0..2 {
                    let mut kp = k.clone();
                    let mut km = k.clone();
                    kp[j] += h;
                    km[j] -= h;
                    fd[j] = (c.eval(&kp).unwrap() - c.eval(&km).unwrap()) / (2.0 * h);
                }
                // skip active-face or abs-term switches inside the stencil:
                // there the one-sided derivatives genuinely differ
                let scale = 1.0 + v0.abs() + g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                for j in 0..2 {
                    if (fd[j] - g[j]).abs() > 1e-3 * scale {
                        kinked = true;
                    }
                }
                if kinked {
                    continue;
                }
                checked += 1;
                for j in 0..2 {
                    assert!(
                        (fd[j] - g[j]).abs() <= 1e-5 * scale,
                        "{:?}: fd {} vs analytic {}",
                        c.kind,
                        fd[j],
                        g[j]
                    );
                }
            }
        }
        assert!(checked > 100, "only {checked} gradient checks ran");
    }

    /// At an exact two-face tie the frozen-face gradient is a valid
    /// subgradient: moving along any direction changes h no faster than the
    /// linear model predicts.
    #[test]
    fn tie_subgradient_is_valid() {
        let cube = unit_cube();
        // point occupancy affine in k, faces +x and +y tied at k = 0
        let fo = PolyZonotope::new(
            vec![0.8, 0.8, 0.0],
            vec![IndetId::Param(0), IndetId::Param(1)],
            vec![
                (vec![0.1, 0.0, 0.0], vec![1, 0]),
                (vec![0.0, 0.05, 0.0], vec![0, 1]),
            ],
        )
        .unwrap();
        let c = Constraint::collision(
            ConstraintKind::Collision {
                step: 0,
                link: 0,
                obstacle: 0,
            },
            &fo,
            &cube,
        )
        .unwrap();
        let k = vec![0.0, 0.0];
        let (v0, g) = c.eval_grad(&k).unwrap();
        assert_relative_eq!(v0, -0.3, epsilon = 1e-12);
        // active face must be +x (lowest index among the tied faces)
        assert_relative_eq!(g[0], -0.1, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let tau = 1e-6;
        for _ in 0..50 {
            let d: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let kd: Vec<f64> = k.iter().zip(&d).map(|(a, b)| a + tau * b).collect();
            let dh = (c.eval(&kd).unwrap() - v0) / tau;
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!(
                dh <= lin + 1e-8,
                "directional rate {dh} exceeds linear model {lin}"
            );
        }
    }

    #[test]
    fn set_cardinality_and_finiteness() {
        let (model, _cfg, bundles, _, _, _) = fixture();
        let obstacles = vec![
            Obstacle::from_box([0.9, 0.9, 0.0], [0.1, 0.1, 0.1]).unwrap(),
            Obstacle::from_box([-0.9, 0.9, 0.0], [0.1, 0.1, 0.1]).unwrap(),
        ];
        let set = ConstraintSet::build(&model, &bundles, &obstacles).unwrap();
        let n_t = bundles.len();
        assert_eq!(
            set.items.len(),
            n_t * model.n_q * 6 + n_t * model.links.len() * obstacles.len()
        );
        let vals = set.eval_all(&vec![0.0; 2]).unwrap();
        assert!(vals.iter().all(|v| v.is_finite()));
        let mv = set.max_violation(&vec![0.0; 2]).unwrap();
        assert_relative_eq!(
            mv,
            vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        );
    }
}

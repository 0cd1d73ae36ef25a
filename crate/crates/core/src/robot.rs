//! Serial manipulator models: kinematic chain, link volumes, and inertial
//! parameters with declared interval uncertainty.
//!
//! Frames follow the chain convention: frame `j` is attached to joint `j` and
//! rotates with link `j`; the joint's rotation axis is a unit vector fixed in
//! both the parent and the child frame (rotation about the axis preserves
//! it); `translation[j]` is the constant position of joint `j`'s origin in
//! the parent frame. Gravity is modeled by giving the base frame the
//! acceleration `-gravity`, so no separate gravity pass exists anywhere in
//! the dynamics.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error reading model: {0}")]
    Io(#[from] std::io::Error),
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Axis-aligned description of one revolute joint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Joint {
    /// Unit rotation axis, expressed in the joint's own frame (identical in
    /// the parent frame).
    pub axis: [f64; 3],
    /// Joint origin in the parent frame.
    pub translation: [f64; 3],
    pub q_lim: [f64; 2],
    pub qd_lim: [f64; 2],
    pub u_lim: [f64; 2],
}

/// Zonotope volume in 3-space: `{ center + sum_i a_i g_i : a in [-1,1]^n }`.
/// Robot files name the fields `volume_center`/`volume_generators`; both
/// spellings deserialize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zonotope3 {
    #[serde(alias = "volume_center")]
    pub center: [f64; 3],
    #[serde(alias = "volume_generators")]
    pub generators: Vec<[f64; 3]>,
}

impl Zonotope3 {
    pub fn center_v(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    pub fn generators_v(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.generators.iter().map(|g| Vector3::from(*g))
    }

    /// Componentwise bounding box.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = self.center;
        let mut hi = self.center;
        for g in &self.generators {
            for d in 0..3 {
                lo[d] -= g[d].abs();
                hi[d] += g[d].abs();
            }
        }
        (lo, hi)
    }

    /// A deterministic set of sample points: center, vertices of the
    /// coefficient hypercube (up to 2^n, capped), plus edge midpoints.
    pub fn sample_points(&self, cap: usize) -> Vec<Vector3<f64>> {
        let n = self.generators.len();
        let mut pts = vec![self.center_v()];
        let combos = 1usize << n.min(10);
        for mask in 0..combos.min(cap) {
            let mut p = self.center_v();
            for (i, g) in self.generators.iter().enumerate() {
                let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                p += s * Vector3::from(*g);
            }
            pts.push(p);
        }
        pts
    }
}

/// Nominal inertial parameters of one link, about its own frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkInertia {
    pub m: f64,
    /// Center of mass in the link frame.
    pub c: [f64; 3],
    /// Inertia tensor about the center of mass, in the link frame.
    #[serde(rename = "I")]
    pub inertia: [[f64; 3]; 3],
}

impl LinkInertia {
    pub fn c_v(&self) -> Vector3<f64> {
        Vector3::from(self.c)
    }

    pub fn inertia_m(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.inertia[i][j])
    }
}

pub type InertialParams = Vec<LinkInertia>;

/// Fractional half-widths applied to the nominal parameters. A missing
/// inertia fraction follows the mass fraction, matching rigid bodies whose
/// inertia scales with their mass.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UncertaintySpec {
    #[serde(default)]
    pub mass_frac: f64,
    #[serde(default)]
    pub com_frac: f64,
    #[serde(default)]
    pub inertia_frac: Option<f64>,
}

impl UncertaintySpec {
    pub fn inertia_frac(&self) -> f64 {
        self.inertia_frac.unwrap_or(self.mass_frac)
    }

    pub fn is_degenerate(&self) -> bool {
        self.mass_frac == 0.0 && self.com_frac == 0.0 && self.inertia_frac() == 0.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mass_frac: self.mass_frac * factor,
            com_frac: self.com_frac * factor,
            inertia_frac: Some(self.inertia_frac() * factor),
        }
    }
}

/// Interval inertial parameters of one link: an axis-aligned box around the
/// nominal values (entrywise; symmetric tensor entries share their interval).
#[derive(Clone, Debug)]
pub struct IntervalLinkInertia {
    pub m: Interval,
    pub c: [Interval; 3],
    pub inertia: [[Interval; 3]; 3],
}

pub type IntervalInertialParams = Vec<IntervalLinkInertia>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobotModel {
    pub n_q: usize,
    pub joints: Vec<Joint>,
    pub links: Vec<Zonotope3>,
    pub inertia: InertialParams,
    pub uncertainty: UncertaintySpec,
    pub gravity: [f64; 3],
}

impl RobotModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: RobotModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::Invalid(msg));
        if self.n_q == 0 {
            return err("n_q must be positive".into());
        }
        if self.joints.len() != self.n_q
            || self.links.len() != self.n_q
            || self.inertia.len() != self.n_q
        {
            return err(format!(
                "n_q = {} but joints/links/inertia have lengths {}/{}/{}",
                self.n_q,
                self.joints.len(),
                self.links.len(),
                self.inertia.len()
            ));
        }
        for (j, joint) in self.joints.iter().enumerate() {
            let norm = Vector3::from(joint.axis).norm();
            if (norm - 1.0).abs() > 1e-6 {
                return err(format!("joint {j}: axis must be unit (norm {norm})"));
            }
            for (name, lim) in [
                ("q_lim", joint.q_lim),
                ("qd_lim", joint.qd_lim),
                ("u_lim", joint.u_lim),
            ] {
                if !(lim[0] < lim[1]) {
                    return err(format!("joint {j}: {name} must satisfy lo < hi"));
                }
            }
        }
        for (j, link) in self.inertia.iter().enumerate() {
            if !(link.m > 0.0) {
                return err(format!("link {j}: mass must be positive"));
            }
            let im = link.inertia_m();
            if (im - im.transpose()).amax() > 1e-9 {
                return err(format!("link {j}: inertia tensor must be symmetric"));
            }
            let eig = im.symmetric_eigen();
            if eig.eigenvalues.min() < -1e-12 {
                return err(format!(
                    "link {j}: inertia tensor must be positive semidefinite"
                ));
            }
        }
        let u = &self.uncertainty;
        for (name, frac) in [
            ("mass_frac", u.mass_frac),
            ("com_frac", u.com_frac),
            ("inertia_frac", u.inertia_frac()),
        ] {
            if !(0.0..1.0).contains(&frac) {
                return err(format!("uncertainty.{name} must lie in [0, 1)"));
            }
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return err("gravity must be finite".into());
        }
        Ok(())
    }

    /// Base-frame acceleration that realizes gravity inside the dynamics
    /// recursion.
    pub fn base_accel(&self) -> Vector3<f64> {
        -Vector3::from(self.gravity)
    }

    /// Rotation of joint `j`'s frame relative to its parent at angle `q`
    /// (Rodrigues about the joint axis), with the fixed translation.
    pub fn joint_transform(&self, j: usize, q: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let axis = Vector3::from(self.joints[j].axis);
        (rodrigues(&axis, q), Vector3::from(self.joints[j].translation))
    }

    /// Forward kinematics: world rotation and origin of every joint frame.
    pub fn fk(&self, q: &[f64]) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
        assert_eq!(q.len(), self.n_q);
        let mut out = Vec::with_capacity(self.n_q);
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        for j in 0..self.n_q {
            let (rj, pj) = self.joint_transform(j, q[j]);
            pos += rot * pj;
            rot *= rj;
            out.push((rot, pos));
        }
        out
    }

    /// Forward occupancy at a single configuration: each link volume mapped
    /// through its frame.
    pub fn forward_occupancy(&self, q: &[f64]) -> Vec<Zonotope3> {
        self.fk(q)
            .iter()
            .zip(&self.links)
            .map(|((rot, pos), vol)| Zonotope3 {
                center: (pos + rot * vol.center_v()).into(),
                generators: vol.generators_v().map(|g| (rot * g).into()).collect(),
            })
            .collect()
    }

    /// Interval parameter box `[nominal +- frac * |nominal|]`.
    pub fn interval_params(&self) -> IntervalInertialParams {
        let u = &self.uncertainty;
        self.inertia
            .iter()
            .map(|link| {
                let spread = |x: f64, frac: f64| Interval::centered(x, x.abs() * frac);
                IntervalLinkInertia {
                    m: spread(link.m, u.mass_frac),
                    c: std::array::from_fn(|i| spread(link.c[i], u.com_frac)),
                    inertia: std::array::from_fn(|i| {
                        std::array::from_fn(|j| spread(link.inertia[i][j], u.inertia_frac()))
                    }),
                }
            })
            .collect()
    }

    /// Independent uniform draw of every scalar in the parameter box
    /// (symmetric tensor entries drawn once). Exercises the full box; the
    /// result need not be a physically consistent rigid body.
    pub fn sample_params_entrywise(&self, rng: &mut impl Rng) -> InertialParams {
        fn draw(rng: &mut impl Rng, iv: Interval) -> f64 {
            if iv.radius() == 0.0 {
                iv.midpoint()
            } else {
                rng.gen_range(iv.lo()..=iv.hi())
            }
        }
        self.interval_params()
            .iter()
            .map(|link| {
                let m = draw(rng, link.m);
                let c = std::array::from_fn(|i| draw(rng, link.c[i]));
                let mut tensor = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in i..3 {
                        let v = draw(rng, link.inertia[i][j]);
                        tensor[i][j] = v;
                        tensor[j][i] = v;
                    }
                }
                LinkInertia {
                    m,
                    c,
                    inertia: tensor,
                }
            })
            .collect()
    }

    /// Physically consistent draw: per link, mass and inertia share one scale
    /// factor (a rigid body's inertia scales with its mass) and the center of
    /// mass shifts within its own box. Results are clamped into the declared
    /// parameter box, which is authoritative.
    pub fn sample_params_scaled(&self, rng: &mut impl Rng) -> InertialParams {
        let u = &self.uncertainty;
        let scales: Vec<f64> = self
            .inertia
            .iter()
            .map(|_| {
                if u.mass_frac > 0.0 {
                    rng.gen_range(1.0 - u.mass_frac..=1.0 + u.mass_frac)
                } else {
                    1.0
                }
            })
            .collect();
        let coms: Vec<[f64; 3]> = self
            .inertia
            .iter()
            .map(|link| {
                std::array::from_fn(|i| {
                    let r = link.c[i].abs() * u.com_frac;
                    if r > 0.0 {
                        link.c[i] + rng.gen_range(-r..=r)
                    } else {
                        link.c[i]
                    }
                })
            })
            .collect();
        self.scaled_params(&scales, &coms)
    }

    /// Parameters with every link's mass scale pinned to an endpoint of its
    /// interval (`hi` selects the upper endpoint), inertia scaled along.
    pub fn params_at_mass_endpoint(&self, hi: bool) -> InertialParams {
        let s = if hi {
            1.0 + self.uncertainty.mass_frac
        } else {
            1.0 - self.uncertainty.mass_frac
        };
        let scales = vec![s; self.n_q];
        let coms: Vec<[f64; 3]> = self.inertia.iter().map(|l| l.c).collect();
        self.scaled_params(&scales, &coms)
    }

    fn scaled_params(&self, scales: &[f64], coms: &[[f64; 3]]) -> InertialParams {
        let clamp = |x: f64, iv: Interval| x.clamp(iv.lo(), iv.hi());
        self.interval_params()
            .iter()
            .zip(self.inertia.iter().enumerate())
            .map(|(iv, (j, link))| LinkInertia {
                m: clamp(scales[j] * link.m, iv.m),
                c: std::array::from_fn(|i| clamp(coms[j][i], iv.c[i])),
                inertia: std::array::from_fn(|r| {
                    std::array::from_fn(|c| clamp(scales[j] * link.inertia[r][c], iv.inertia[r][c]))
                }),
            })
            .collect()
    }

    /// Sampled bounds on the mass matrix spectrum over configurations and
    /// the parameter box; the returned pair `(sigma_m, sigma_M)` shrinks the
    /// minimum by `margin` and inflates the maximum by it.
    pub fn eigen_bounds(&self, n_samples: usize, seed: u64, margin: f64) -> (f64, f64) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut min_e = f64::INFINITY;
        let mut max_e = f64::NEG_INFINITY;
        for i in 0..n_samples {
            let q: Vec<f64> = self
                .joints
                .iter()
                .map(|j| rng.gen_range(j.q_lim[0]..=j.q_lim[1]))
                .collect();
            // alternate endpoint and interior draws so box corners are covered
            let params = match i % 4 {
                0 => self.params_at_mass_endpoint(false),
                1 => self.params_at_mass_endpoint(true),
                2 => self.sample_params_scaled(&mut rng),
                _ => self.sample_params_entrywise(&mut rng),
            };
            let m = crate::dynamics::mass_matrix(self, &q, &params);
            let eig = m.symmetric_eigen();
            min_e = min_e.min(eig.eigenvalues.min());
            max_e = max_e.max(eig.eigenvalues.max());
        }
        (min_e * (1.0 - margin), max_e * (1.0 + margin))
    }
}

/// Rotation about a unit axis by angle `q` (Rodrigues form:
/// `I + sin(q) K + (1 - cos(q)) K^2` with `K = skew(axis)`).
pub fn rodrigues(axis: &Vector3<f64>, q: f64) -> Matrix3<f64> {
    let k = skew(axis);
    Matrix3::identity() + q.sin() * k + (1.0 - q.cos()) * (k * k)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

//! Inverse dynamics for the modified-reference tracking structure, in three
//! arithmetics sharing one recursion: real (`rnea`), interval over the
//! inertial-parameter box (`irnea`), and polynomial-zonotope over whole
//! trajectory families (`pzrnea`).
//!
//! The recursion carries two angular velocities: the actual `w` driven by
//! `qd` and the auxiliary `wa` driven by the modified velocity `qd_a`. With
//! `qd_a = qd` both collapse and the recursion is the textbook one. The
//! output satisfies `u = M(q) qdd_a + C(q, qd) qd_a + G(q)` with `C` the
//! Christoffel form, which is what makes `M' - 2C` skew-symmetric.
//!
//! Frame bookkeeping (see the robot module): all per-link quantities live in
//! the link's own frame. The forward pass transports the parent quantities
//! through the joint rotation; the linear-acceleration line picks up the
//! lever terms of the parent frame's rotation acting on the fixed joint
//! offset, so the offset of joint `j` appears in link `j`'s forward step and
//! the offset of joint `j+1` appears in link `j`'s backward moment balance.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::interval::{Interval, IntervalMatrix};
use crate::polyzono::{
    pz_cross, pz_dot, pz_mul_scalar, pz_taylor, Cos, IndetId, PolyZonotope, PzError, PzMat, Sin,
};
use crate::robot::{
    skew, InertialParams, IntervalInertialParams, IntervalLinkInertia, RobotModel,
};

/// Measured state plus the desired trajectory evaluated at the same instant;
/// everything the tracking controller observes.
#[derive(Clone, Debug)]
pub struct TotalFeedbackState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub q_d: Vec<f64>,
    pub qd_d: Vec<f64>,
    pub qdd_d: Vec<f64>,
}

/// Configuration, velocity, and the modified reference velocity and
/// acceleration consumed by the recursions.
#[derive(Clone, Debug)]
pub struct ModifiedState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qd_a: Vec<f64>,
    pub qdd_a: Vec<f64>,
}

impl TotalFeedbackState {
    pub fn n_q(&self) -> usize {
        self.q.len()
    }

    /// Position error `e = q_d - q`.
    pub fn position_error(&self) -> Vec<f64> {
        self.q_d.iter().zip(&self.q).map(|(d, q)| d - q).collect()
    }

    /// Velocity error `de = qd_d - qd`.
    pub fn velocity_error(&self) -> Vec<f64> {
        self.qd_d.iter().zip(&self.qd).map(|(d, q)| d - q).collect()
    }

    /// Modified reference: `qd_a = qd_d + K_r e`, `qdd_a = qdd_d + K_r de`,
    /// with `k_r` the diagonal of the gain matrix.
    pub fn modified(&self, k_r: &[f64]) -> ModifiedState {
        let e = self.position_error();
        let de = self.velocity_error();
        ModifiedState {
            q: self.q.clone(),
            qd: self.qd.clone(),
            qd_a: self
                .qd_d
                .iter()
                .zip(k_r.iter().zip(&e))
                .map(|(v, (k, e))| v + k * e)
                .collect(),
            qdd_a: self
                .qdd_d
                .iter()
                .zip(k_r.iter().zip(&de))
                .map(|(a, (k, de))| a + k * de)
                .collect(),
        }
    }

    /// Modified tracking error `r = de + K_r e = qd_a - qd`.
    pub fn modified_error(&self, k_r: &[f64]) -> Vec<f64> {
        let e = self.position_error();
        self.velocity_error()
            .iter()
            .zip(k_r.iter().zip(&e))
            .map(|(de, (k, e))| de + k * e)
            .collect()
    }
}

struct ForwardPass {
    rot: Vec<Matrix3<f64>>,
    w: Vec<Vector3<f64>>,
    wa: Vec<Vector3<f64>>,
    dw: Vec<Vector3<f64>>,
    a: Vec<Vector3<f64>>,
}

/// Kinematic forward recursion; shared by the real and interval variants
/// (inertial parameters only enter from the wrench stage on).
fn forward_pass(model: &RobotModel, st: &ModifiedState, base_accel: Vector3<f64>) -> ForwardPass {
    let n = model.n_q;
    let mut out = ForwardPass {
        rot: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        wa: Vec::with_capacity(n),
        dw: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
    };
    let (mut w_p, mut wa_p, mut dw_p) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    let mut a_p = base_accel;
    for j in 0..n {
        let (rot, p) = model.joint_transform(j, st.q[j]);
        let rt = rot.transpose();
        let z = Vector3::from(model.joints[j].axis);
        let w = rt * w_p + st.qd[j] * z;
        let wa = rt * wa_p + st.qd_a[j] * z;
        let dw = rt * dw_p + (rt * wa_p).cross(&(st.qd[j] * z)) + st.qdd_a[j] * z;
        let a = rt * (a_p + dw_p.cross(&p) + w_p.cross(&wa_p.cross(&p)));
        out.rot.push(rot);
        out.w.push(w);
        out.wa.push(wa);
        out.dw.push(dw);
        out.a.push(a);
        (w_p, wa_p, dw_p, a_p) = (w, wa, dw, a);
    }
    out
}

/// Inverse dynamics: joint torques realizing `qdd_a` along `qd_a` at state
/// `(q, qd)` under the given parameters, with the base accelerated by
/// `base_accel` (pass `model.base_accel()` to include gravity, zero to
/// exclude it).
pub fn rnea(
    model: &RobotModel,
    st: &ModifiedState,
    params: &InertialParams,
    base_accel: Vector3<f64>,
) -> Vec<f64> {
    let n = model.n_q;
    let fwd = forward_pass(model, st, base_accel);

    let mut force = Vec::with_capacity(n);
    let mut moment = Vec::with_capacity(n);
    for j in 0..n {
        let c = params[j].c_v();
        let inertia = params[j].inertia_m();
        let a_c = fwd.a[j] + fwd.dw[j].cross(&c) + fwd.w[j].cross(&fwd.wa[j].cross(&c));
        force.push(params[j].m * a_c);
        moment.push(inertia * fwd.dw[j] + fwd.wa[j].cross(&(inertia * fwd.w[j])));
    }

    let mut u = vec![0.0; n];
    let mut f_child = Vector3::zeros();
    let mut n_child = Vector3::zeros();
    for j in (0..n).rev() {
        let (f_in, n_in) = if j + 1 < n {
            let rc = fwd.rot[j + 1];
            let p_next = Vector3::from(model.joints[j + 1].translation);
            let f = rc * f_child;
            (f, rc * n_child + p_next.cross(&f))
        } else {
            (Vector3::zeros(), Vector3::zeros())
        };
        let c = params[j].c_v();
        f_child = f_in + force[j];
        n_child = n_in + c.cross(&force[j]) + moment[j];
        u[j] = Vector3::from(model.joints[j].axis).dot(&n_child);
    }
    u
}

/// Interval inverse dynamics over the inertial-parameter box: the output
/// intervals contain `rnea` for every parameter selection in the box. The
/// kinematic pass is real; intervals enter with the first inertial quantity.
pub fn irnea(
    model: &RobotModel,
    st: &ModifiedState,
    params: &IntervalInertialParams,
    base_accel: Vector3<f64>,
) -> Vec<Interval> {
    let n = model.n_q;
    let fwd = forward_pass(model, st, base_accel);
    let real3 = |v: Vector3<f64>| IntervalMatrix::from_real(3, 1, &[v.x, v.y, v.z]);

    let mut force = Vec::with_capacity(n);
    let mut moment = Vec::with_capacity(n);
    for j in 0..n {
        let c = IntervalMatrix::col_vec(&params[j].c);
        let inertia = IntervalMatrix::from_fn(3, 3, |i, l| params[j].inertia[i][l]);
        let (w, wa, dw, a) = (
            real3(fwd.w[j]),
            real3(fwd.wa[j]),
            real3(fwd.dw[j]),
            real3(fwd.a[j]),
        );
        let a_c = a
            .add(&dw.cross(&c).unwrap())
            .unwrap()
            .add(&w.cross(&wa.cross(&c).unwrap()).unwrap())
            .unwrap();
        force.push(a_c.scale(params[j].m));
        let gyro = wa.cross(&inertia.matmul(&w).unwrap()).unwrap();
        moment.push(inertia.matmul(&dw).unwrap().add(&gyro).unwrap());
    }

    let mut u = vec![Interval::point(0.0); n];
    let mut f_child = IntervalMatrix::zeros(3, 1);
    let mut n_child = IntervalMatrix::zeros(3, 1);
    for j in (0..n).rev() {
        let (f_in, n_in) = if j + 1 < n {
            let rc = fwd.rot[j + 1];
            let rc_iv = IntervalMatrix::from_real(3, 3, rc.transpose().as_slice());
            let p_next = real3(Vector3::from(model.joints[j + 1].translation));
            let f = rc_iv.matmul(&f_child).unwrap();
            let n_in = rc_iv
                .matmul(&n_child)
                .unwrap()
                .add(&p_next.cross(&f).unwrap())
                .unwrap();
            (f, n_in)
        } else {
            (IntervalMatrix::zeros(3, 1), IntervalMatrix::zeros(3, 1))
        };
        let c = IntervalMatrix::col_vec(&params[j].c);
        f_child = f_in.add(&force[j]).unwrap();
        n_child = n_in
            .add(&c.cross(&force[j]).unwrap())
            .unwrap()
            .add(&moment[j])
            .unwrap();
        let z = Vector3::from(model.joints[j].axis);
        u[j] = (0..3).fold(Interval::point(0.0), |acc, i| {
            acc + z[i] * n_child.get(i, 0)
        });
    }
    u
}

/// Per-joint trajectory sets consumed by [`pzrnea`]: sine and cosine
/// enclosures of the position set plus velocity and modified-reference sets.
#[derive(Clone, Debug)]
pub struct PzJointState {
    pub sin_q: PolyZonotope,
    pub cos_q: PolyZonotope,
    pub qd: PolyZonotope,
    pub qd_a: PolyZonotope,
    pub qdd_a: PolyZonotope,
}

impl PzJointState {
    /// Degenerate joint state at a point (used by collapse tests and as the
    /// base case of enclosure checks).
    pub fn at_point(q: f64, qd: f64, qd_a: f64, qdd_a: f64) -> Self {
        Self {
            sin_q: PolyZonotope::constant(vec![q.sin()]),
            cos_q: PolyZonotope::constant(vec![q.cos()]),
            qd: PolyZonotope::constant(vec![qd]),
            qd_a: PolyZonotope::constant(vec![qd_a]),
            qdd_a: PolyZonotope::constant(vec![qdd_a]),
        }
    }

    /// Builds the sine/cosine enclosures of a position set with Taylor
    /// enclosures of the given degree.
    pub fn from_position_pz(
        q: &PolyZonotope,
        qd: PolyZonotope,
        qd_a: PolyZonotope,
        qdd_a: PolyZonotope,
        taylor_degree: usize,
    ) -> Result<Self, PzError> {
        Ok(Self {
            sin_q: pz_taylor(&Sin, q, taylor_degree)?,
            cos_q: pz_taylor(&Cos, q, taylor_degree)?,
            qd,
            qd_a,
            qdd_a,
        })
    }
}

/// One link's inertial parameters as polynomial zonotopes. Interval
/// parameters get one degree-1 indeterminate per independent scalar;
/// symmetric tensor entries share theirs.
#[derive(Clone, Debug)]
pub struct PzLinkInertia {
    pub m: PolyZonotope,
    pub c: PolyZonotope,
    pub inertia: PzMat,
}

#[derive(Clone, Debug)]
pub struct PzInertialParams {
    pub links: Vec<PzLinkInertia>,
}

impl PzInertialParams {
    pub fn from_nominal(params: &InertialParams) -> Self {
        let links = params
            .iter()
            .map(|l| PzLinkInertia {
                m: PolyZonotope::constant(vec![l.m]),
                c: PolyZonotope::constant(l.c.to_vec()),
                inertia: PzMat::from_real(3, 3, &l.inertia_m().transpose().as_slice().to_vec()),
            })
            .collect();
        Self { links }
    }

    pub fn from_intervals(params: &IntervalInertialParams) -> Self {
        let links = params.iter().map(pz_link_from_interval).collect();
        Self { links }
    }

    /// Zero-centered deltas of an interval box: masses and inertia entries
    /// keep their radii on fresh indeterminates but lose their midpoints,
    /// centers of mass collapse to their midpoints. For a fixed center of
    /// mass the joint torque is jointly linear and homogeneous in the masses
    /// and inertia tensors, so running inverse dynamics on the deltas alone
    /// yields exactly the torque mismatch between any boxed parameter
    /// selection and the nominal parameters. Errors when a center-of-mass
    /// interval has nonzero radius, since that linearity is what makes the
    /// construction valid.
    pub fn from_interval_deltas(params: &IntervalInertialParams) -> Result<Self, PzError> {
        let links = params
            .iter()
            .map(|link| {
                if link.c.iter().any(|iv| iv.radius() > 0.0) {
                    return Err(PzError::Invalid(
                        "parameter deltas require a point center of mass per link".into(),
                    ));
                }
                Ok(PzLinkInertia {
                    m: PolyZonotope::from_interval(
                        Interval::centered(0.0, link.m.radius()),
                        IndetId::fresh(),
                    ),
                    c: PolyZonotope::constant(link.c.iter().map(|iv| iv.midpoint()).collect()),
                    inertia: symmetric_pz_mat(|i, j| (0.0, link.inertia[i][j].radius())),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { links })
    }

    /// Evaluates every parameter set member at a concrete indeterminate
    /// assignment; lets sampling tests turn a sigma draw into the matching
    /// real parameters.
    pub fn realize(
        &self,
        assignment: &dyn Fn(IndetId) -> Option<f64>,
    ) -> Result<InertialParams, PzError> {
        self.links
            .iter()
            .map(|l| {
                let m = l.m.eval(assignment)?[0];
                let c = l.c.eval(assignment)?;
                let tensor = l.inertia.as_pz().eval(assignment)?;
                Ok(crate::robot::LinkInertia {
                    m,
                    c: [c[0], c[1], c[2]],
                    inertia: std::array::from_fn(|i| std::array::from_fn(|j| tensor[i * 3 + j])),
                })
            })
            .collect()
    }

    /// All indeterminates introduced for the parameter box.
    pub fn ids(&self) -> Vec<IndetId> {
        let mut ids: Vec<IndetId> = Vec::new();
        for l in &self.links {
            ids.extend_from_slice(l.m.ids());
            ids.extend_from_slice(l.c.ids());
            ids.extend_from_slice(l.inertia.as_pz().ids());
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn pz_link_from_interval(link: &IntervalLinkInertia) -> PzLinkInertia {
    let m = PolyZonotope::from_interval(link.m, IndetId::fresh());
    let c = PolyZonotope::from_intervals_fresh(&link.c);
    let iv = &link.inertia;
    let inertia = symmetric_pz_mat(|i, j| (iv[i][j].midpoint(), iv[i][j].radius()));
    PzLinkInertia { m, c, inertia }
}

/// Row-major 3x3 set matrix from per-entry `(midpoint, radius)` with one
/// shared indeterminate per symmetric pair.
fn symmetric_pz_mat(entry: impl Fn(usize, usize) -> (f64, f64)) -> PzMat {
    let mut center = vec![0.0; 9];
    let mut ids = Vec::new();
    let mut gens: Vec<(Vec<f64>, Vec<u32>)> = Vec::new();
    for i in 0..3 {
        for j in i..3 {
            let (mid, rad) = entry(i, j);
            center[i * 3 + j] = mid;
            center[j * 3 + i] = mid;
            if rad > 0.0 {
                ids.push(IndetId::fresh());
                let mut coeff = vec![0.0; 9];
                coeff[i * 3 + j] = rad;
                coeff[j * 3 + i] = rad;
                let mut expo = vec![0u32; ids.len()];
                expo[ids.len() - 1] = 1;
                gens.push((coeff, expo));
            }
        }
    }
    let n_ids = ids.len();
    for (_, expo) in &mut gens {
        expo.resize(n_ids, 0);
    }
    PzMat::from_pz(
        PolyZonotope::new(center, ids, gens).expect("fresh ids are distinct"),
        3,
        3,
    )
    .expect("9 entries")
}

/// Rotation enclosure `I + sin K + (1 - cos) K^2` about a fixed unit axis
/// with sine/cosine given as sets; affine in the inputs, hence exact.
pub fn rotation_pz(
    axis: &Vector3<f64>,
    sin_q: &PolyZonotope,
    cos_q: &PolyZonotope,
) -> Result<PzMat, PzError> {
    let k = skew(axis);
    let k2 = k * k;
    let flat = |m: &Matrix3<f64>| -> Vec<f64> { m.transpose().as_slice().to_vec() };
    let base = PzMat::from_real(3, 3, &flat(&(Matrix3::identity() + k2)));
    let sin_term = PzMat::from_pz(
        pz_mul_scalar(PzMat::from_real(3, 3, &flat(&k)).as_pz(), sin_q)?,
        3,
        3,
    )?;
    let cos_term = PzMat::from_pz(
        pz_mul_scalar(PzMat::from_real(3, 3, &flat(&(-k2))).as_pz(), cos_q)?,
        3,
        3,
    )?;
    base.add(&sin_term)?.add(&cos_term)
}

fn const3(v: Vector3<f64>) -> PolyZonotope {
    PolyZonotope::constant(vec![v.x, v.y, v.z])
}

/// Polynomial-zonotope inverse dynamics: the recursion over trajectory and
/// parameter sets. For every realization of the indeterminates (time along
/// the step, trajectory parameter, tracking error, parameter box member) the
/// real `rnea` output lies in the corresponding slice of the result.
/// Generator budgets are enforced after every assignment.
pub fn pzrnea(
    model: &RobotModel,
    joints: &[PzJointState],
    params: &PzInertialParams,
    base_accel: Vector3<f64>,
    budget: usize,
) -> Result<Vec<PolyZonotope>, PzError> {
    if budget == 0 {
        return Err(PzError::Invalid("reduction budget must be positive".into()));
    }
    let n = model.n_q;
    assert_eq!(joints.len(), n);
    assert_eq!(params.links.len(), n);
    let red = |p: PolyZonotope| p.reduce(budget);

    let mut rot: Vec<PzMat> = Vec::with_capacity(n);
    let mut w: Vec<PolyZonotope> = Vec::with_capacity(n);
    let mut wa: Vec<PolyZonotope> = Vec::with_capacity(n);
    let mut dw: Vec<PolyZonotope> = Vec::with_capacity(n);
    let mut acc: Vec<PolyZonotope> = Vec::with_capacity(n);

    let zero3 = PolyZonotope::constant(vec![0.0; 3]);
    let (mut w_p, mut wa_p, mut dw_p) = (zero3.clone(), zero3.clone(), zero3.clone());
    let mut a_p = const3(base_accel);

    for j in 0..n {
        let axis = Vector3::from(model.joints[j].axis);
        let p = Vector3::from(model.joints[j].translation);
        let r = rotation_pz(&axis, &joints[j].sin_q, &joints[j].cos_q)?;
        let rt = r.transpose();

        let z = const3(axis);
        let qd_z = pz_mul_scalar(&z, &joints[j].qd)?;
        let qda_z = pz_mul_scalar(&z, &joints[j].qd_a)?;
        let qdda_z = pz_mul_scalar(&z, &joints[j].qdd_a)?;

        let rt_w = red(rt.matvec(&w_p)?);
        let rt_wa = red(rt.matvec(&wa_p)?);
        let w_j = red(rt_w.add(&qd_z)?);
        let wa_j = red(rt_wa.add(&qda_z)?);
        let dw_j = red(rt
            .matvec(&dw_p)?
            .add(&red(pz_cross(&rt_wa, &qd_z)?))?
            .add(&qdda_z)?);
        // reduce every factor before it enters another product; unreduced
        // chains make the generator count multiplicative
        let spin = red(pz_cross(&w_p, &red(pz_cross(&wa_p, &const3(p))?))?);
        let lever = red(a_p
            .add(&red(pz_cross(&dw_p, &const3(p))?))?
            .add(&spin)?);
        let a_j = red(rt.matvec(&lever)?);

        rot.push(r);
        w.push(w_j.clone());
        wa.push(wa_j.clone());
        dw.push(dw_j.clone());
        acc.push(a_j.clone());
        (w_p, wa_p, dw_p, a_p) = (w_j, wa_j, dw_j, a_j);
    }

    let mut force: Vec<PolyZonotope> = Vec::with_capacity(n);
    let mut moment: Vec<PolyZonotope> = Vec::with_capacity(n);
    for j in 0..n {
        let link = &params.links[j];
        let a_c = red(acc[j]
            .add(&red(pz_cross(&dw[j], &link.c)?))?
            .add(&red(pz_cross(&w[j], &red(pz_cross(&wa[j], &link.c)?))?))?);
        force.push(red(pz_mul_scalar(&a_c, &link.m)?));
        let i_dw = red(link.inertia.matvec(&dw[j])?);
        let i_w = red(link.inertia.matvec(&w[j])?);
        moment.push(red(i_dw.add(&red(pz_cross(&wa[j], &i_w)?))?));
    }

    let mut u = vec![PolyZonotope::constant(vec![0.0]); n];
    let mut f_child = zero3.clone();
    let mut n_child = zero3;
    for j in (0..n).rev() {
        let (f_in, n_in) = if j + 1 < n {
            let rc = &rot[j + 1];
            let p_next = Vector3::from(model.joints[j + 1].translation);
            let f = red(rc.matvec(&f_child)?);
            let n_in = red(rc
                .matvec(&n_child)?
                .add(&red(pz_cross(&const3(p_next), &f)?))?);
            (f, n_in)
        } else {
            (
                PolyZonotope::constant(vec![0.0; 3]),
                PolyZonotope::constant(vec![0.0; 3]),
            )
        };
        let link = &params.links[j];
        f_child = red(f_in.add(&force[j])?);
        n_child = red(n_in
            .add(&red(pz_cross(&link.c, &force[j])?))?
            .add(&moment[j])?);
        let axis = Vector3::from(model.joints[j].axis);
        u[j] = red(pz_dot(&const3(axis), &n_child)?);
    }
    Ok(u)
}

/// Mass matrix via unit-acceleration columns of the zero-velocity,
/// zero-gravity inverse dynamics; symmetrized to scrub roundoff.
pub fn mass_matrix(model: &RobotModel, q: &[f64], params: &InertialParams) -> DMatrix<f64> {
    let n = model.n_q;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut qdd_a = vec![0.0; n];
        qdd_a[j] = 1.0;
        let st = ModifiedState {
            q: q.to_vec(),
            qd: vec![0.0; n],
            qd_a: vec![0.0; n],
            qdd_a,
        };
        let col = rnea(model, &st, params, Vector3::zeros());
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    0.5 * (&m + m.transpose())
}

/// Velocity and gravity torque `C(q, qd) qd + G(q)`; the plant acceleration
/// is `M^{-1}(u - bias)`.
pub fn bias_torque(model: &RobotModel, q: &[f64], qd: &[f64], params: &InertialParams) -> Vec<f64> {
    let n = model.n_q;
    let st = ModifiedState {
        q: q.to_vec(),
        qd: qd.to_vec(),
        qd_a: qd.to_vec(),
        qdd_a: vec![0.0; n],
    };
    rnea(model, &st, params, model.base_accel())
}

/// Interval enclosure of `M(q, delta) r` over the parameter box: the
/// recursion at zero velocity, zero base acceleration, and acceleration `r`.
pub fn mass_times_r(
    model: &RobotModel,
    q: &[f64],
    r: &[f64],
    params: &IntervalInertialParams,
) -> Vec<Interval> {
    let n = model.n_q;
    let st = ModifiedState {
        q: q.to_vec(),
        qd: vec![0.0; n],
        qd_a: vec![0.0; n],
        qdd_a: r.to_vec(),
    };
    irnea(model, &st, params, Vector3::zeros())
}

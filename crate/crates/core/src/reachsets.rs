//! Per-time-step reachable sets over the trajectory family: forward
//! kinematics and occupancy of every link, and the set of control inputs the
//! tracking controller can issue.
//!
//! One bundle is built per time-grid segment. All sets in a bundle share the
//! segment's time indeterminate, the global parameter indeterminates (which
//! survive reduction so the sets stay sliceable in `k`), and the
//! tracking-error indeterminates. The robust-input part of the input set is
//! a constant box by construction, so slicing an input set in `k` moves only
//! its nominal polynomial part.

use nalgebra::Vector3;
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::dynamics::{pzrnea, rotation_pz, PzInertialParams, PzJointState};
use crate::polyzono::{IndetId, PolyZonotope, PzError, PzMat};
use crate::robot::{InertialParams, IntervalInertialParams, RobotModel};
use crate::trajectory::{
    buffer_error_pz, desired_traj_pz, BufferedPz, DesiredPz, InitialCondition, TimeGrid,
    TrajError, TrajFamily,
};

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Pz(#[from] PzError),
}

/// Budgets and enclosure degrees for reach-set construction.
#[derive(Clone, Copy, Debug)]
pub struct ReachConfig {
    /// Taylor degree for sine/cosine enclosures.
    pub taylor_degree: usize,
    /// Generator budget applied after every arithmetic stage.
    pub budget: usize,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            taylor_degree: 6,
            budget: 100,
        }
    }
}

/// World-frame rotation and origin enclosures for every joint frame.
pub fn pzfk(
    model: &RobotModel,
    joints: &[PzJointState],
    budget: usize,
) -> Result<Vec<(PzMat, PolyZonotope)>, ReachError> {
    let mut out = Vec::with_capacity(model.n_q);
    let mut rot = PzMat::identity(3);
    let mut pos = PolyZonotope::constant(vec![0.0; 3]);
    for (j, joint) in joints.iter().enumerate() {
        let axis = Vector3::from(model.joints[j].axis);
        let trans = Vector3::from(model.joints[j].translation);
        let local = rotation_pz(&axis, &joint.sin_q, &joint.cos_q)?;
        let step = PolyZonotope::constant(vec![trans.x, trans.y, trans.z]);
        pos = pos.add(&rot.matvec(&step)?)?.reduce(budget);
        rot = reduce_mat(rot.matmul(&local)?, budget);
        out.push((rot.clone(), pos.clone()));
    }
    Ok(out)
}

fn reduce_mat(m: PzMat, budget: usize) -> PzMat {
    let (rows, cols) = m.shape();
    PzMat::from_pz(m.into_pz().reduce(budget), rows, cols).expect("reduce preserves dim")
}

/// Forward occupancy enclosures: each link volume mapped through its frame,
/// `FO_j = p_j + R_j L_j`, with the volume's coefficients on fresh
/// indeterminates.
pub fn pz_forward_occupancy(
    model: &RobotModel,
    frames: &[(PzMat, PolyZonotope)],
    budget: usize,
) -> Result<Vec<PolyZonotope>, ReachError> {
    let mut out = Vec::with_capacity(model.n_q);
    for (link, (rot, pos)) in model.links.iter().zip(frames) {
        let mut ids = Vec::with_capacity(link.generators.len());
        let mut gens = Vec::with_capacity(link.generators.len());
        for g in &link.generators {
            ids.push(IndetId::fresh());
            let mut expo = vec![0u32; ids.len()];
            expo[ids.len() - 1] = 1;
            gens.push((g.to_vec(), expo));
        }
        let n_ids = ids.len();
        for (_, expo) in &mut gens {
            expo.resize(n_ids, 0);
        }
        let volume = PolyZonotope::new(link.center.to_vec(), ids, gens).expect("fresh ids");
        let fo = pos.add(&rot.matvec(&volume)?)?.reduce(budget);
        out.push(fo);
    }
    Ok(out)
}

/// Input reachable set per joint: the nominal torque polynomial plus a
/// constant robust-input box.
#[derive(Clone, Debug)]
pub struct InputReachSet {
    /// `U_j = tau_j - v_j`, the sets the constraints consume.
    pub u: Vec<PolyZonotope>,
    /// Nominal torque enclosures.
    pub tau: Vec<PolyZonotope>,
    /// Worst-case disturbance magnitude per joint over the whole step.
    pub w_m: Vec<f64>,
    /// Constant robust-input bound per joint (the box half-width).
    pub v_bound: Vec<f64>,
}

/// Builds the input reachable set: nominal torque enclosure from the nominal
/// parameters, a disturbance magnitude from the interval parameters, and the
/// per-joint robust-input bound attached on its own indeterminate.
///
/// The disturbance is one inverse-dynamics pass over the zero-centered
/// parameter deltas. For a fixed center of mass the joint torque is jointly
/// linear and homogeneous in the masses and inertia tensors, so the delta
/// pass equals the mismatch between any boxed parameter selection and the
/// nominal parameters exactly, and any generators the reduction boxes stay
/// inside the disturbance set. Subtracting two full passes instead would
/// rely on shared monomials cancelling, which reduction destroys.
pub fn input_reach_set(
    model: &RobotModel,
    joints: &[PzJointState],
    cfg: &ControllerConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
    budget: usize,
) -> Result<InputReachSet, ReachError> {
    let accel = model.base_accel();
    let tau = pzrnea(
        model,
        joints,
        &PzInertialParams::from_nominal(nominal),
        accel,
        budget,
    )?;
    let deltas = PzInertialParams::from_interval_deltas(boxed)?;
    let w = pzrnea(model, joints, &deltas, accel, budget)?;
    let mut w_m = Vec::with_capacity(model.n_q);
    for wj in &w {
        let (lo, hi) = wj.bounds();
        w_m.push(lo[0].abs().max(hi[0].abs()));
    }
    let v_bound = cfg.robust_input_bound(&w_m);
    let mut u = Vec::with_capacity(model.n_q);
    for (j, t) in tau.iter().enumerate() {
        let v = PolyZonotope::indeterminate(IndetId::Robust(j as u32)).scale(v_bound[j]);
        u.push(t.sub(&v)?);
    }
    Ok(InputReachSet {
        u,
        tau,
        w_m,
        v_bound,
    })
}

/// Everything reachable over one time-grid segment.
#[derive(Clone, Debug)]
pub struct ReachSetBundle {
    pub step: usize,
    pub desired: DesiredPz,
    pub buffered: BufferedPz,
    pub joints: Vec<PzJointState>,
    pub frames: Vec<(PzMat, PolyZonotope)>,
    pub fo: Vec<PolyZonotope>,
    pub input: InputReachSet,
}

/// Builds the full bundle for segment `i`: desired sets, error-buffered
/// sets, trigonometric enclosures, frames, occupancy, and input sets.
#[allow(clippy::too_many_arguments)]
pub fn build_bundle(
    model: &RobotModel,
    init: &InitialCondition,
    family: &TrajFamily,
    grid: &TimeGrid,
    i: usize,
    ctrl: &ControllerConfig,
    reach: &ReachConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
) -> Result<ReachSetBundle, ReachError> {
    let desired = desired_traj_pz(init, family, grid, i)?;
    let ub = ctrl.uniform_bounds();
    let buffered = buffer_error_pz(&desired, &ctrl.k_r, &ub.eps_p, ub.eps_v)?;
    let mut joints = Vec::with_capacity(model.n_q);
    for j in 0..model.n_q {
        let js = PzJointState::from_position_pz(
            &buffered.q[j],
            buffered.qd[j].clone(),
            buffered.qd_a[j].clone(),
            buffered.qdd_a[j].clone(),
            reach.taylor_degree,
        )?;
        joints.push(PzJointState {
            sin_q: js.sin_q.reduce(reach.budget),
            cos_q: js.cos_q.reduce(reach.budget),
            ..js
        });
    }
    let frames = pzfk(model, &joints, reach.budget)?;
    let fo = pz_forward_occupancy(model, &frames, reach.budget)?;
    let input = input_reach_set(model, &joints, ctrl, nominal, boxed, reach.budget)?;
    Ok(ReachSetBundle {
        step: i,
        desired,
        buffered,
        joints,
        frames,
        fo,
        input,
    })
}

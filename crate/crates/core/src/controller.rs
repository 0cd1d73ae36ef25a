//! Robust passivity-based tracking control with a provable uniform bound.
//!
//! The control input is `u = tau - v`: a nominal passivity-based term `tau`
//! computed from the nominal parameters, minus a robust term `v` sized
//! online from an interval bound on the parametric disturbance. The design
//! keeps the Lyapunov function `V = r' M r / 2` below a chosen threshold
//! `V_M` (a control-barrier argument on `h = -V + V_M`), which yields
//! uniform tracking-error bounds that hold for every parameter realization
//! in the model's interval box:
//!
//! - `||r(t)|| <= eps       = sqrt(2 V_M / sigma_min)`
//! - `|e_j(t)| <= eps_p[j]  = eps / K_r[j]`
//! - `|de_j(t)| <= eps_v    = 2 eps`
//!
//! provided the tracking starts with zero error. A per-joint constant bound
//! on `|v_j|` (used by the input reachable sets) and a classical
//! high-gain baseline controller for comparison live here too.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{
    bias_torque, irnea, mass_times_r, rnea, ModifiedState, TotalFeedbackState,
};
use crate::interval::Interval;
use crate::robot::{InertialParams, IntervalInertialParams, RobotModel};
use crate::trajectory::{BernsteinTrajectory, TrajError};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error("mass matrix singular during simulation")]
    Singular,
    #[error(transparent)]
    Traj(#[from] TrajError),
}

/// Controller gains and the certified mass-matrix eigenvalue range.
#[derive(Clone, Debug)]
pub struct ControllerConfig {
    /// Diagonal of the error-feedback gain `K_r` (one entry per joint).
    pub k_r: Vec<f64>,
    /// Lyapunov threshold the barrier keeps `V` below.
    pub v_m: f64,
    /// Slope of the linear barrier function `alpha(x) = alpha_c x`.
    pub alpha_c: f64,
    /// Lower bound on mass-matrix eigenvalues over configurations and the
    /// parameter box.
    pub sigma_min: f64,
    /// Upper bound, same range.
    pub sigma_max: f64,
}

/// Uniform tracking-error guarantees derived from a configuration.
#[derive(Clone, Debug)]
pub struct UniformBounds {
    pub eps: f64,
    pub eps_p: Vec<f64>,
    pub eps_v: f64,
}

impl ControllerConfig {
    pub fn new(
        k_r: Vec<f64>,
        v_m: f64,
        alpha_c: f64,
        sigma_min: f64,
        sigma_max: f64,
    ) -> Result<Self, ControlError> {
        let cfg = Self {
            k_r,
            v_m,
            alpha_c,
            sigma_min,
            sigma_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.k_r.is_empty() || self.k_r.iter().any(|&k| !(k > 0.0)) {
            return Err(ControlError::Config("K_r diagonal must be positive".into()));
        }
        if !(self.v_m > 0.0) {
            return Err(ControlError::Config("V_M must be positive".into()));
        }
        if !(self.alpha_c > 0.0) {
            return Err(ControlError::Config("alpha_c must be positive".into()));
        }
        if !(0.0 < self.sigma_min && self.sigma_min <= self.sigma_max) {
            return Err(ControlError::Config(
                "eigenvalue bounds need 0 < sigma_min <= sigma_max".into(),
            ));
        }
        Ok(())
    }

    /// `eps = sqrt(2 V_M / sigma_min)`, positions `eps / K_r[j]`, velocities
    /// `2 eps`.
    pub fn uniform_bounds(&self) -> UniformBounds {
        let eps = (2.0 * self.v_m / self.sigma_min).sqrt();
        UniformBounds {
            eps,
            eps_p: self.k_r.iter().map(|k| eps / k).collect(),
            eps_v: 2.0 * eps,
        }
    }

    /// Per-joint constant bound on the robust input magnitude:
    /// `alpha_c eps (sigma_max - sigma_min) / 2 + (||w_M|| + w_M[j]) / 2`.
    pub fn robust_input_bound(&self, w_m: &[f64]) -> Vec<f64> {
        let eps = self.uniform_bounds().eps;
        let norm = l2(w_m);
        w_m.iter()
            .map(|wj| self.alpha_c * eps * (self.sigma_max - self.sigma_min) / 2.0 + (norm + wj) / 2.0)
            .collect()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Nominal passivity-based input: inverse dynamics of the modified
/// reference under the nominal parameters.
pub fn nominal_input(
    model: &RobotModel,
    st: &ModifiedState,
    nominal: &InertialParams,
) -> Vec<f64> {
    rnea(model, st, nominal, model.base_accel())
}

/// Interval disturbance `[w] = irnea([Delta]) - rnea(Delta_0)` and its
/// elementwise worst-case magnitude `w_M`.
pub fn disturbance_bound(
    model: &RobotModel,
    st: &ModifiedState,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
) -> (Vec<Interval>, Vec<f64>) {
    let tau = rnea(model, st, nominal, model.base_accel());
    let w: Vec<Interval> = irnea(model, st, boxed, model.base_accel())
        .iter()
        .zip(&tau)
        .map(|(iv, t)| *iv - Interval::point(*t))
        .collect();
    let w_m = w.iter().map(|iv| iv.abs_max()).collect();
    (w, w_m)
}

/// Guaranteed lower bound on the barrier `h = -V + V_M`: `-sup([V]) + V_M`
/// with `[V] = r' [M r] / 2` over the parameter box.
pub fn h_lower(
    model: &RobotModel,
    q: &[f64],
    r: &[f64],
    boxed: &IntervalInertialParams,
    v_m: f64,
) -> f64 {
    let mr = mass_times_r(model, q, r, boxed);
    let v = r
        .iter()
        .zip(&mr)
        .fold(Interval::point(0.0), |acc, (ri, mi)| acc + *ri * *mi);
    -0.5 * v.hi() + v_m
}

/// Everything one control evaluation produces; `u = tau - v`.
#[derive(Clone, Debug)]
pub struct ControlDecision {
    pub tau: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Robust gain: `gamma` for the barrier controller, the state-independent
    /// coefficient `kappa ||w_M|| + phi` for the baseline.
    pub gamma: f64,
    pub w_m: Vec<f64>,
    pub h_lower: f64,
}

const R_NORM_FLOOR: f64 = 1e-12;

/// Per-segment worst-case disturbance bounds precomputed by a reach-set
/// construction. Segment `i` covers trajectory time `[i dt, (i+1) dt]`;
/// times past the last segment clamp to it. Feeding these to the controller
/// keeps the executed robust input inside the bound the input reachable set
/// was buffered with.
#[derive(Clone, Debug)]
pub struct DisturbanceSchedule {
    pub dt: f64,
    /// One `w_m` vector per segment; must be non-empty.
    pub per_step: Vec<Vec<f64>>,
}

impl DisturbanceSchedule {
    pub fn at(&self, t: f64) -> &[f64] {
        debug_assert!(!self.per_step.is_empty() && self.dt > 0.0);
        let i = (t / self.dt).floor() as usize;
        &self.per_step[i.min(self.per_step.len() - 1)]
    }
}

/// The robust controller: `v = -gamma r / ||r||` with `gamma` the smallest
/// magnitude that enforces the barrier inequality against the worst-case
/// disturbance (zero whenever the inequality already holds).
pub fn robust_input(
    model: &RobotModel,
    state: &TotalFeedbackState,
    cfg: &ControllerConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
) -> ControlDecision {
    let st = state.modified(&cfg.k_r);
    let (_, w_m) = disturbance_bound(model, &st, nominal, boxed);
    robust_input_with_bound(model, state, cfg, nominal, boxed, w_m)
}

/// As [`robust_input`] but with the worst-case disturbance bound supplied by
/// the caller. Any `w_m` that dominates the true disturbance magnitude at
/// the current state preserves the tracking guarantee; a reach-set segment
/// bound qualifies for every state inside that segment's tube.
pub fn robust_input_with_bound(
    model: &RobotModel,
    state: &TotalFeedbackState,
    cfg: &ControllerConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
    w_m: Vec<f64>,
) -> ControlDecision {
    let st = state.modified(&cfg.k_r);
    let r = state.modified_error(&cfg.k_r);
    let tau = nominal_input(model, &st, nominal);
    let hl = h_lower(model, &state.q, &r, boxed, cfg.v_m);
    let r_norm = l2(&r);
    let (gamma, v) = if r_norm <= R_NORM_FLOOR {
        (0.0, vec![0.0; r.len()])
    } else {
        let coupling: f64 = r.iter().zip(&w_m).map(|(ri, wi)| ri.abs() * wi).sum();
        let gamma = ((-cfg.alpha_c * hl + coupling) / r_norm).max(0.0);
        (gamma, r.iter().map(|ri| -gamma * ri / r_norm).collect())
    };
    let u = tau.iter().zip(&v).map(|(t, v)| t - v).collect();
    ControlDecision {
        tau,
        v,
        u,
        gamma,
        w_m,
        h_lower: hl,
    }
}

/// Classical high-gain baseline: `v = -(kappa ||w_M|| + phi) r`. With
/// `kappa = sqrt(sigma_max / (2 V_M))` its ultimate bound matches the
/// barrier controller's, which makes the robust-input magnitudes directly
/// comparable.
pub fn baseline_robust_input(
    model: &RobotModel,
    state: &TotalFeedbackState,
    cfg: &ControllerConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
    kappa: f64,
    phi: f64,
) -> ControlDecision {
    let st = state.modified(&cfg.k_r);
    let r = state.modified_error(&cfg.k_r);
    let tau = nominal_input(model, &st, nominal);
    let (_, w_m) = disturbance_bound(model, &st, nominal, boxed);
    let coeff = kappa * l2(&w_m) + phi;
    let v: Vec<f64> = r.iter().map(|ri| -coeff * ri).collect();
    let u = tau.iter().zip(&v).map(|(t, v)| t - v).collect();
    let hl = h_lower(model, &state.q, &r, boxed, cfg.v_m);
    ControlDecision {
        tau,
        v,
        u,
        gamma: coeff,
        w_m,
        h_lower: hl,
    }
}

/// The baseline's `kappa` that replicates the barrier controller's ultimate
/// bound.
pub fn baseline_matched_kappa(cfg: &ControllerConfig) -> f64 {
    (cfg.sigma_max / (2.0 * cfg.v_m)).sqrt()
}

/// Worst-case robust-input magnitude of the baseline, `sqrt(sigma_max /
/// sigma_min) ||w_M||`; compare with [`ControllerConfig::robust_input_bound`].
pub fn baseline_bound(cfg: &ControllerConfig, w_m: &[f64]) -> f64 {
    (cfg.sigma_max / cfg.sigma_min).sqrt() * l2(w_m)
}

/// Which control law a simulation runs.
#[derive(Clone, Copy, Debug)]
pub enum ControlLaw {
    Robust,
    Baseline { kappa: f64, phi: f64 },
}

/// One logged simulation step.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SimStep {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub e: Vec<f64>,
    pub de: Vec<f64>,
    pub r_norm: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct SimLog {
    pub steps: Vec<SimStep>,
}

impl SimLog {
    pub fn max_r_norm(&self) -> f64 {
        self.steps.iter().map(|s| s.r_norm).fold(0.0, f64::max)
    }

    pub fn max_abs_v(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.v.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.steps.first().map_or(0, |s| s.e.len());
        let mut e = vec![0.0f64; n];
        let mut de = vec![0.0f64; n];
        for s in &self.steps {
            for j in 0..n {
                e[j] = e[j].max(s.e[j].abs());
                de[j] = de[j].max(s.de[j].abs());
            }
        }
        (e, de)
    }

    /// CSV export: `t, q_j.., qd_j.., e_j.., u_j.., v_j.., r_norm, gamma`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.steps.first().map_or(0, |s| s.q.len());
        let mut header = vec!["t".to_string()];
        for prefix in ["q", "qd", "e", "u", "v"] {
            for j in 0..n {
                header.push(format!("{prefix}{j}"));
            }
        }
        header.push("r_norm".into());
        header.push("gamma".into());
        out.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![format!("{:.9}", s.t)];
            for vals in [&s.q, &s.qd, &s.e, &s.u, &s.v] {
                row.extend(vals.iter().map(|x| format!("{x:.9e}")));
            }
            row.push(format!("{:.9e}", s.r_norm));
            row.push(format!("{:.9e}", s.gamma));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fixed-step RK4 closed-loop rollout of the manipulator under the chosen
/// law over the whole trajectory horizon. The plant integrates the true
/// parameters; the controller only sees the nominal parameters and the
/// interval box. Initial tracking error is `(e0, de0)` (pass zeros for the
/// theorem's hypothesis).
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    model: &RobotModel,
    traj: &BernsteinTrajectory,
    true_params: &InertialParams,
    cfg: &ControllerConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
    law: ControlLaw,
    dt: f64,
    e0: &[f64],
    de0: &[f64],
) -> Result<SimLog, ControlError> {
    simulate_closed_loop_span(
        model,
        traj,
        true_params,
        cfg,
        nominal,
        boxed,
        law,
        None,
        dt,
        (0.0, traj.t_f),
        e0,
        de0,
    )
}

/// As [`simulate_closed_loop`], but only over `span = (t0, t1)` within the
/// trajectory horizon; the initial tracking error is relative to the desired
/// state at `t0`. The control is re-evaluated at every integrator stage.
/// With a [`DisturbanceSchedule`] the robust law consumes the precomputed
/// per-segment bound instead of the pointwise interval bound.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop_span(
    model: &RobotModel,
    traj: &BernsteinTrajectory,
    true_params: &InertialParams,
    cfg: &ControllerConfig,
    nominal: &InertialParams,
    boxed: &IntervalInertialParams,
    law: ControlLaw,
    wm: Option<&DisturbanceSchedule>,
    dt: f64,
    span: (f64, f64),
    e0: &[f64],
    de0: &[f64],
) -> Result<SimLog, ControlError> {
    cfg.validate()?;
    let (t0, t1) = span;
    if !(0.0..=traj.t_f + 1e-9).contains(&t0) || t1 < t0 || t1 > traj.t_f + 1e-9 {
        return Err(ControlError::Config(
            "simulation span outside trajectory horizon".into(),
        ));
    }
    let n = model.n_q;
    let steps = ((t1 - t0) / dt).round() as usize;
    let (q0, qd0, _) = traj.eval(t0)?;
    let mut q: Vec<f64> = q0.iter().zip(e0).map(|(d, e)| d - e).collect();
    let mut qd: Vec<f64> = qd0.iter().zip(de0).map(|(d, e)| d - e).collect();
    let mut log = SimLog::default();

    let control = |t: f64, q: &[f64], qd: &[f64]| -> Result<(TotalFeedbackState, ControlDecision), ControlError> {
        let (q_d, qd_d, qdd_d) = traj.eval(t.min(traj.t_f))?;
        let state = TotalFeedbackState {
            q: q.to_vec(),
            qd: qd.to_vec(),
            q_d,
            qd_d,
            qdd_d,
        };
        let dec = match (law, wm) {
            (ControlLaw::Robust, Some(s)) => {
                robust_input_with_bound(model, &state, cfg, nominal, boxed, s.at(t).to_vec())
            }
            (ControlLaw::Robust, None) => robust_input(model, &state, cfg, nominal, boxed),
            (ControlLaw::Baseline { kappa, phi }, _) => {
                baseline_robust_input(model, &state, cfg, nominal, boxed, kappa, phi)
            }
        };
        Ok((state, dec))
    };

    let accel = |t: f64, q: &[f64], qd: &[f64]| -> Result<Vec<f64>, ControlError> {
        let (_, dec) = control(t, q, qd)?;
        let m = crate::dynamics::mass_matrix(model, q, true_params);
        let b = bias_torque(model, q, qd, true_params);
        let rhs = DVector::from_iterator(n, dec.u.iter().zip(&b).map(|(u, b)| u - b));
        let qdd = m
            .lu()
            .solve(&rhs)
            .ok_or(ControlError::Singular)?;
        Ok(qdd.iter().copied().collect())
    };

    let axpy = |x: &[f64], d: &[f64], h: f64| -> Vec<f64> {
        x.iter().zip(d).map(|(a, b)| a + h * b).collect()
    };

    for s in 0..=steps {
        let t = t0 + s as f64 * dt;
        let (state, dec) = control(t, &q, &qd)?;
        let r = state.modified_error(&cfg.k_r);
        log.steps.push(SimStep {
            t,
            q: q.clone(),
            qd: qd.clone(),
            e: state.position_error(),
            de: state.velocity_error(),
            r_norm: l2(&r),
            u: dec.u.clone(),
            v: dec.v.clone(),
            gamma: dec.gamma,
        });
        if s == steps {
            break;
        }
        let k1 = (qd.clone(), accel(t, &q, &qd)?);
        let k2q = axpy(&q, &k1.0, dt / 2.0);
        let k2v = axpy(&qd, &k1.1, dt / 2.0);
        let k2 = (k2v.clone(), accel(t + dt / 2.0, &k2q, &k2v)?);
        let k3q = axpy(&q, &k2.0, dt / 2.0);
        let k3v = axpy(&qd, &k2.1, dt / 2.0);
        let k3 = (k3v.clone(), accel(t + dt / 2.0, &k3q, &k3v)?);
        let k4q = axpy(&q, &k3.0, dt);
        let k4v = axpy(&qd, &k3.1, dt);
        let k4 = (k4v.clone(), accel(t + dt, &k4q, &k4v)?);
        for j in 0..n {
            q[j] += dt / 6.0 * (k1.0[j] + 2.0 * k2.0[j] + 2.0 * k3.0[j] + k4.0[j]);
            qd[j] += dt / 6.0 * (k1.1[j] + 2.0 * k2.1[j] + 2.0 * k3.1[j] + k4.1[j]);
        }
    }
    Ok(log)
}

/// Barrier value along a logged rollout under a concrete parameter set:
/// `h(t) = -r' M(q) r / 2 + V_M`.
pub fn barrier_along_log(
    model: &RobotModel,
    log: &SimLog,
    params: &InertialParams,
    cfg: &ControllerConfig,
) -> Vec<f64> {
    log.steps
        .iter()
        .map(|s| {
            let m = crate::dynamics::mass_matrix(model, &s.q, params);
            let e: Vec<f64> = s.e.clone();
            let de: Vec<f64> = s.de.clone();
            let r: Vec<f64> = de
                .iter()
                .zip(cfg.k_r.iter().zip(&e))
                .map(|(de, (k, e))| de + k * e)
                .collect();
            let rv = DMatrix::from_column_slice(r.len(), 1, &r);
            -0.5 * (rv.transpose() * m * rv)[(0, 0)] + cfg.v_m
        })
        .collect()
}

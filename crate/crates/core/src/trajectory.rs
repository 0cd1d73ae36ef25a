//! Parameterized desired trajectories and their set-valued counterparts.
//!
//! The family is a degree-5 Bernstein polynomial per joint over `[0, t_f]`,
//! pinned at the start to a given position, velocity, and acceleration and
//! braking to a complete stop at the end (final velocity and acceleration
//! are structurally zero). One scalar parameter `k_j` in `[-1, 1]` per joint
//! picks the final position `eta_1 k_j + eta_2`.
//!
//! The same polynomials are evaluated over sets: a time-grid segment becomes
//! a degree-1 polynomial zonotope in its own time indeterminate, the
//! parameter becomes one in the joint's parameter indeterminate, and the
//! Bernstein basis is evaluated in PZ arithmetic, which keeps every
//! dependency exact (the construction is polynomial, so no conservatism
//! enters before trigonometry).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyzono::{pz_mul_scalar, pz_pow, IndetId, PolyZonotope, PzError};

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("trajectory parameter {0} outside [-1, 1]")]
    ParamRange(f64),
    #[error("time {t} outside horizon [0, {t_f}]")]
    TimeRange { t: f64, t_f: f64 },
    #[error("time grid needs at least one step")]
    EmptyGrid,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Pz(#[from] PzError),
}

/// State the desired trajectory must start from (position, velocity,
/// acceleration per joint).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitialCondition {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
}

impl InitialCondition {
    pub fn rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qd: vec![0.0; n],
            qdd: vec![0.0; n],
        }
    }

    pub fn n_q(&self) -> usize {
        self.q.len()
    }

    fn check(&self) -> Result<(), TrajError> {
        let all = self.q.iter().chain(&self.qd).chain(&self.qdd);
        if self.qd.len() != self.q.len() || self.qdd.len() != self.q.len() {
            return Err(TrajError::NonFinite("initial condition length mismatch"));
        }
        if all.clone().any(|x| !x.is_finite()) {
            return Err(TrajError::NonFinite("initial condition"));
        }
        Ok(())
    }
}

/// Shape of the trajectory family: horizon and the per-joint affine map from
/// the parameter to the final position, `q_d(t_f; k_j) = eta1 k_j + eta2_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajFamily {
    pub t_f: f64,
    /// Final-position half-range per joint.
    pub eta1: Vec<f64>,
    /// Final-position center per joint.
    pub eta2: Vec<f64>,
}

impl TrajFamily {
    /// Default family: final positions centered on the start (`eta2 = q0`)
    /// with a pi/48 half-range.
    pub fn centered(init: &InitialCondition, t_f: f64) -> Self {
        Self {
            t_f,
            eta1: vec![std::f64::consts::PI / 48.0; init.n_q()],
            eta2: init.q.clone(),
        }
    }

    pub fn final_position(&self, k: &[f64]) -> Vec<f64> {
        self.eta1
            .iter()
            .zip(&self.eta2)
            .zip(k)
            .map(|((a, b), k)| a * k + b)
            .collect()
    }
}

/// Concrete member of the family: six Bernstein coefficients per joint over
/// the rescaled horizon `[0, 1]`.
#[derive(Clone, Debug)]
pub struct BernsteinTrajectory {
    pub t_f: f64,
    pub beta: Vec<[f64; 6]>,
}

const CHOOSE5: [f64; 6] = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
const CHOOSE4: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
const CHOOSE3: [f64; 4] = [1.0, 3.0, 3.0, 1.0];

/// The five pinned coefficients for one joint, on the unit interval: the
/// start state fixes `beta_0..2` (with derivatives rescaled by `t_f`) and
/// the braking stop forces `beta_3 = beta_4 = beta_5`.
fn pinned_coeffs(q0: f64, qd0: f64, qdd0: f64, beta5: f64, t_f: f64) -> [f64; 6] {
    let b0 = q0;
    let b1 = b0 + qd0 * t_f / 5.0;
    let b2 = qdd0 * t_f * t_f / 20.0 + 2.0 * b1 - b0;
    [b0, b1, b2, beta5, beta5, beta5]
}

/// Builds the trajectory selected by `k` (componentwise in `[-1, 1]`).
pub fn bernstein_coeffs(
    init: &InitialCondition,
    k: &[f64],
    family: &TrajFamily,
) -> Result<BernsteinTrajectory, TrajError> {
    init.check()?;
    assert_eq!(k.len(), init.n_q());
    for &kj in k {
        if !kj.is_finite() || kj.abs() > 1.0 {
            return Err(TrajError::ParamRange(kj));
        }
    }
    let beta = (0..init.n_q())
        .map(|j| {
            let beta5 = family.eta1[j] * k[j] + family.eta2[j];
            pinned_coeffs(init.q[j], init.qd[j], init.qdd[j], beta5, family.t_f)
        })
        .collect();
    Ok(BernsteinTrajectory {
        t_f: family.t_f,
        beta,
    })
}

fn bernstein_basis<const N: usize>(s: f64, choose: &[f64; N]) -> [f64; N] {
    let n = N - 1;
    std::array::from_fn(|l| choose[l] * s.powi(l as i32) * (1.0 - s).powi((n - l) as i32))
}

impl BernsteinTrajectory {
    pub fn n_q(&self) -> usize {
        self.beta.len()
    }

    /// Desired position, velocity, and acceleration at `t` (seconds).
    #[allow(clippy::type_complexity)]
    pub fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), TrajError> {
        if !(-1e-9..=self.t_f + 1e-9).contains(&t) {
            return Err(TrajError::TimeRange { t, t_f: self.t_f });
        }
        let s = (t / self.t_f).clamp(0.0, 1.0);
        let b5 = bernstein_basis(s, &CHOOSE5);
        let b4 = bernstein_basis(s, &CHOOSE4);
        let b3 = bernstein_basis(s, &CHOOSE3);
        let mut q = vec![0.0; self.n_q()];
        let mut qd = vec![0.0; self.n_q()];
        let mut qdd = vec![0.0; self.n_q()];
        for (j, beta) in self.beta.iter().enumerate() {
            q[j] = (0..6).map(|l| beta[l] * b5[l]).sum();
            qd[j] = (0..5)
                .map(|l| (beta[l + 1] - beta[l]) * b4[l])
                .sum::<f64>()
                * 5.0
                / self.t_f;
            qdd[j] = (0..4)
                .map(|l| (beta[l + 2] - 2.0 * beta[l + 1] + beta[l]) * b3[l])
                .sum::<f64>()
                * 20.0
                / (self.t_f * self.t_f);
        }
        Ok((q, qd, qdd))
    }
}

/// Uniform partition of `[0, t_f]` into `n_t` segments, each represented as
/// a degree-1 polynomial zonotope in its own time indeterminate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_f: f64,
    pub n_t: usize,
}

impl TimeGrid {
    pub fn new(t_f: f64, n_t: usize) -> Result<Self, TrajError> {
        if n_t == 0 {
            return Err(TrajError::EmptyGrid);
        }
        if !(t_f > 0.0) || !t_f.is_finite() {
            return Err(TrajError::NonFinite("t_f"));
        }
        Ok(Self { t_f, n_t })
    }

    pub fn dt(&self) -> f64 {
        self.t_f / self.n_t as f64
    }

    /// Segment `i` (0-based) as a PZ: center `(i + 1/2) dt`, radius `dt/2`,
    /// indeterminate `Time(i)`.
    pub fn pz(&self, i: usize) -> PolyZonotope {
        assert!(i < self.n_t);
        let dt = self.dt();
        PolyZonotope::from_interval(
            crate::interval::Interval::centered((i as f64 + 0.5) * dt, dt / 2.0),
            IndetId::Time(i as u32),
        )
    }

    /// Realized time for a slice value `sigma` in `[-1, 1]` of segment `i`.
    pub fn realize(&self, i: usize, sigma: f64) -> f64 {
        let dt = self.dt();
        (i as f64 + 0.5) * dt + sigma * dt / 2.0
    }
}

/// Desired-trajectory sets for one grid segment: position, velocity, and
/// acceleration per joint, polynomial in `Time(i)` and `Param(j)`.
#[derive(Clone, Debug)]
pub struct DesiredPz {
    pub q: Vec<PolyZonotope>,
    pub qd: Vec<PolyZonotope>,
    pub qdd: Vec<PolyZonotope>,
}

/// Evaluates `sum_l coeff_l C(n,l) s^l (1-s)^(n-l)` in PZ arithmetic;
/// coefficients may carry parameter indeterminates.
fn bernstein_pz(coeffs: &[PolyZonotope], s: &PolyZonotope) -> Result<PolyZonotope, PzError> {
    let n = coeffs.len() - 1;
    let one_minus = s.neg().add_const(&[1.0])?;
    let mut acc = PolyZonotope::constant(vec![0.0]);
    for (l, coeff) in coeffs.iter().enumerate() {
        let choose = match n {
            5 => CHOOSE5[l],
            4 => CHOOSE4[l],
            3 => CHOOSE3[l],
            _ => unreachable!("degrees used here are 3..5"),
        };
        let term = pz_mul_scalar(&pz_pow(s, l as u32)?, &pz_pow(&one_minus, (n - l) as u32)?)?;
        acc = acc.add(&pz_mul_scalar(&term.scale(choose), coeff)?)?;
    }
    Ok(acc)
}

/// Builds the desired-trajectory sets over grid segment `i` for the whole
/// parameter family: every `(t, k)` with `t` in the segment and `k` in
/// `[-1,1]^n` realizes to a member of the returned sets, and slicing both
/// indeterminates reproduces the point evaluation exactly.
pub fn desired_traj_pz(
    init: &InitialCondition,
    family: &TrajFamily,
    grid: &TimeGrid,
    i: usize,
) -> Result<DesiredPz, TrajError> {
    init.check()?;
    let s = grid.pz(i).scale(1.0 / grid.t_f);
    let t_f = grid.t_f;
    let n_q = init.n_q();
    let mut out = DesiredPz {
        q: Vec::with_capacity(n_q),
        qd: Vec::with_capacity(n_q),
        qdd: Vec::with_capacity(n_q),
    };
    for j in 0..n_q {
        let beta5 = PolyZonotope::indeterminate(IndetId::Param(j as u32))
            .scale(family.eta1[j])
            .add_const(&[family.eta2[j]])?;
        let b = pinned_coeffs(init.q[j], init.qd[j], init.qdd[j], 0.0, t_f);
        let cnst = |x: f64| PolyZonotope::constant(vec![x]);
        let betas = [cnst(b[0]), cnst(b[1]), cnst(b[2]), beta5.clone(), beta5.clone(), beta5];

        out.q.push(bernstein_pz(&betas, &s)?);

        let mut d1 = Vec::with_capacity(5);
        for l in 0..5 {
            d1.push(betas[l + 1].sub(&betas[l])?.scale(5.0 / t_f));
        }
        out.qd.push(bernstein_pz(&d1, &s)?);

        let mut d2 = Vec::with_capacity(4);
        for l in 0..4 {
            d2.push(
                betas[l + 2]
                    .sub(&betas[l + 1].scale(2.0))?
                    .add(&betas[l])?
                    .scale(20.0 / (t_f * t_f)),
            );
        }
        out.qdd.push(bernstein_pz(&d2, &s)?);
    }
    Ok(out)
}

/// Trajectory sets buffered by the tracking-error guarantee, plus the
/// modified-reference sets the controller actually feeds the dynamics.
#[derive(Clone, Debug)]
pub struct BufferedPz {
    /// Reachable positions: desired plus position error.
    pub q: Vec<PolyZonotope>,
    /// Reachable velocities: desired plus velocity error.
    pub qd: Vec<PolyZonotope>,
    /// Modified reference velocity `qd_d + K_r e`.
    pub qd_a: Vec<PolyZonotope>,
    /// Modified reference acceleration `qdd_d + K_r de`.
    pub qdd_a: Vec<PolyZonotope>,
}

/// Buffers the desired sets by the uniform tracking-error bounds: position
/// error `|e_j| <= eps_p[j]`, velocity error `|de_j| <= eps_v`. The error
/// indeterminates are shared between the buffered state and the modified
/// reference so that the functional couplings `q = q_d - e` and
/// `qd_a = qd_d + K_r e` stay exact; the signs realize `ErrPos(j) = e_j /
/// eps_p[j]` and `ErrVel(j) = de_j / eps_v`.
pub fn buffer_error_pz(
    desired: &DesiredPz,
    k_r: &[f64],
    eps_p: &[f64],
    eps_v: f64,
) -> Result<BufferedPz, TrajError> {
    if eps_v < 0.0 || eps_p.iter().any(|&e| e < 0.0) {
        return Err(TrajError::NonFinite("negative error bound"));
    }
    let n_q = desired.q.len();
    let mut out = BufferedPz {
        q: Vec::with_capacity(n_q),
        qd: Vec::with_capacity(n_q),
        qd_a: Vec::with_capacity(n_q),
        qdd_a: Vec::with_capacity(n_q),
    };
    for j in 0..n_q {
        let e = PolyZonotope::indeterminate(IndetId::ErrPos(j as u32)).scale(eps_p[j]);
        let de = PolyZonotope::indeterminate(IndetId::ErrVel(j as u32)).scale(eps_v);
        out.q.push(desired.q[j].sub(&e)?);
        out.qd.push(desired.qd[j].sub(&de)?);
        out.qd_a.push(desired.qd[j].add(&e.scale(k_r[j]))?);
        out.qdd_a.push(desired.qdd[j].add(&de.scale(k_r[j]))?);
    }
    Ok(out)
}

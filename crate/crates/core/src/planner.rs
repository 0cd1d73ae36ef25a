//! Receding-horizon trajectory planning. Each horizon solves a small
//! constrained program over the trajectory parameter `k` (cost: squared
//! distance of the desired endpoint to a waypoint, constraints: the sliced
//! reach-set bounds), executes the first `t_p` seconds of the chosen
//! trajectory while the next solve runs, and falls back to the current
//! trajectory's braking tail whenever planning fails or times out. A
//! sampling audit replays finished episodes against the original limits.

use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::{
    zonotope_separated, ConstraintError, ConstraintKind, ConstraintSet, Obstacle,
};
use crate::controller::{
    simulate_closed_loop_span, ControlError, ControlLaw, ControllerConfig, DisturbanceSchedule,
    SimLog,
};
use crate::polyzono::{IndetId, PzError};
use crate::reachsets::{build_bundle, ReachConfig, ReachError};
use crate::robot::{InertialParams, RobotModel};
use crate::trajectory::{bernstein_coeffs, InitialCondition, TimeGrid, TrajError, TrajFamily};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planning problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Pz(#[from] PzError),
}

/// Extra clearance demanded from every collision constraint, so solver
/// precision wiggle can never flip a verified separation.
pub const DELTA_OBS: f64 = 1e-6;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

fn clamp_unit(k: &mut [f64]) {
    for x in k {
        *x = x.clamp(-1.0, 1.0);
    }
}

/// Everything one receding-horizon instance needs: robot, scene, timing
/// contract, and the controller / reach-set configuration.
#[derive(Clone, Debug)]
pub struct PlanningProblem {
    pub model: RobotModel,
    pub obstacles: Vec<Obstacle>,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    /// Planning window: each solve gets this much wall time, and the robot
    /// executes this prefix of every trajectory.
    pub t_p: f64,
    /// Trajectory horizon; `[t_p, t_f]` is the braking tail.
    pub t_f: f64,
    /// Number of time segments the reach sets are built over.
    pub n_t: usize,
    pub ctrl: ControllerConfig,
    pub reach: ReachConfig,
}

impl PlanningProblem {
    /// Checks dimensions, timing, joint limits, and that the start and goal
    /// poses are certifiably separated from every obstacle (by the same
    /// face test the collision constraints use).
    pub fn validate(&self) -> Result<(), PlanError> {
        let n = self.model.n_q;
        if self.q_start.len() != n || self.q_goal.len() != n {
            return Err(PlanError::Invalid(format!(
                "start/goal dimension must match the {n}-joint model"
            )));
        }
        if !(self.t_p > 0.0 && self.t_f > self.t_p) {
            return Err(PlanError::Invalid("need 0 < t_p < t_f".into()));
        }
        if self.n_t == 0 {
            return Err(PlanError::Invalid("need at least one time segment".into()));
        }
        for (name, q) in [("start", &self.q_start), ("goal", &self.q_goal)] {
            for (j, joint) in self.model.joints.iter().enumerate() {
                if q[j] < joint.q_lim[0] || q[j] > joint.q_lim[1] {
                    return Err(PlanError::Invalid(format!(
                        "{name} position for joint {j} outside limits"
                    )));
                }
            }
            for (l, vol) in self.model.forward_occupancy(q).iter().enumerate() {
                for (o, obs) in self.obstacles.iter().enumerate() {
                    if !zonotope_separated(vol, obs) {
                        return Err(PlanError::Invalid(format!(
                            "{name} pose: link {l} not separated from obstacle {o}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// What one horizon solve produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PlanOutcome {
    /// Verified parameter: every constraint holds at the returned `k`.
    Feasible(Vec<f64>),
    /// The solver finished without finding a feasible parameter.
    Infeasible,
    /// The wall-clock budget ran out first.
    TimedOut,
}

impl PlanOutcome {
    pub fn feasible_k(&self) -> Option<&[f64]> {
        match self {
            Self::Feasible(k) => Some(k),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    /// Total wall time of the solve, reach-set construction included.
    pub solve_seconds: f64,
    /// Inner solver iterations.
    pub iterations: usize,
    /// Re-verified worst constraint value at the returned parameter (margin
    /// included); `None` when the budget expired before reach sets existed.
    pub max_constraint: Option<f64>,
}

/// Box-constrained program `min f(k) s.t. h(k) <= 0, k in [-1, 1]^dim`.
pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn cost_grad(&self, k: &[f64]) -> (f64, Vec<f64>);
    fn constraint_values(&self, k: &[f64]) -> Result<Vec<f64>, PzError>;
    /// Values and gradients in one pass.
    fn constraint_grads(&self, k: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), PzError>;
}

/// How one solver run ended.
#[derive(Clone, Debug)]
pub struct SolverRun {
    pub k: Vec<f64>,
    pub iterations: usize,
    /// Whether `k` satisfied every constraint when the solver checked it.
    pub feasible: bool,
    pub timed_out: bool,
}

pub trait NlpSolver {
    fn solve(
        &self,
        problem: &dyn NlpProblem,
        k0: &[f64],
        deadline: Instant,
    ) -> Result<SolverRun, PzError>;
}

/// Augmented-Lagrangian solver with a projected L-BFGS inner loop. The
/// multiplier estimates keep inactive constraints out of the way, the
/// penalty grows only when the violation measure stalls, and every
/// evaluated point that happens to be feasible is remembered, so a deadline
/// hit still returns the best feasible parameter seen so far.
#[derive(Clone, Debug)]
pub struct AugLagSolver {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Outer stop: feasible with `max_i |max(h_i, -lambda_i / mu)|` below
    /// this (feasibility plus complementarity).
    pub tol: f64,
    pub mu0: f64,
    pub mu_growth: f64,
    /// L-BFGS memory length.
    pub history: usize,
}

impl Default for AugLagSolver {
    fn default() -> Self {
        Self {
            max_outer: 12,
            max_inner: 60,
            tol: 1e-8,
            mu0: 10.0,
            mu_growth: 10.0,
            history: 5,
        }
    }
}

struct Best {
    k: Vec<f64>,
    cost: f64,
}

/// `sum_i [max(0, lambda_i + mu h_i)^2 - lambda_i^2] / (2 mu)`.
fn penalty(h: &[f64], lambda: &[f64], mu: f64) -> f64 {
    h.iter()
        .zip(lambda)
        .map(|(&hi, &li)| ((li + mu * hi).max(0.0).powi(2) - li * li) / (2.0 * mu))
        .sum()
}

impl AugLagSolver {
    fn remember(best: &mut Option<Best>, k: &[f64], cost: f64, h: &[f64]) {
        if h.iter().all(|&v| v <= 0.0) && best.as_ref().is_none_or(|b| cost < b.cost) {
            *best = Some(Best {
                k: k.to_vec(),
                cost,
            });
        }
    }

    /// Lagrangian value and raw constraint values at `k`.
    fn eval(
        problem: &dyn NlpProblem,
        k: &[f64],
        lambda: &[f64],
        mu: f64,
        best: &mut Option<Best>,
    ) -> Result<(f64, Vec<f64>), PzError> {
        let (f, _) = problem.cost_grad(k);
        let h = problem.constraint_values(k)?;
        Self::remember(best, k, f, &h);
        Ok((f + penalty(&h, lambda, mu), h))
    }

    /// Lagrangian value, gradient, and raw constraint values at `k`.
    fn eval_grad(
        problem: &dyn NlpProblem,
        k: &[f64],
        lambda: &[f64],
        mu: f64,
        best: &mut Option<Best>,
    ) -> Result<(f64, Vec<f64>, Vec<f64>), PzError> {
        let (f, mut g) = problem.cost_grad(k);
        let (h, grads) = problem.constraint_grads(k)?;
        Self::remember(best, k, f, &h);
        let val = f + penalty(&h, lambda, mu);
        for (i, &hi) in h.iter().enumerate() {
            let t = lambda[i] + mu * hi;
            if t > 0.0 {
                for (gj, dj) in g.iter_mut().zip(&grads[i]) {
                    *gj += t * dj;
                }
            }
        }
        Ok((val, g, h))
    }
}

impl NlpSolver for AugLagSolver {
    fn solve(
        &self,
        problem: &dyn NlpProblem,
        k0: &[f64],
        deadline: Instant,
    ) -> Result<SolverRun, PzError> {
        let mut k = k0.to_vec();
        clamp_unit(&mut k);
        let mut best: Option<Best> = None;
        let mut iterations = 0usize;
        let mut timed_out = false;

        let h0 = problem.constraint_values(&k)?;
        let (f0, _) = problem.cost_grad(&k);
        Self::remember(&mut best, &k, f0, &h0);
        let mut lambda = vec![0.0; h0.len()];
        let mut mu = self.mu0;
        let mut prev_v = f64::INFINITY;

        'outer: for _ in 0..self.max_outer {
            // Projected L-BFGS on the smooth subproblem.
            let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
            let (mut l_cur, mut g_cur, mut h_cur) =
                Self::eval_grad(problem, &k, &lambda, mu, &mut best)?;
            for _ in 0..self.max_inner {
                if Instant::now() >= deadline {
                    timed_out = true;
                    break 'outer;
                }
                iterations += 1;
                // Two-loop recursion for d = -H g.
                let mut d: Vec<f64> = g_cur.iter().map(|x| -x).collect();
                let mut alphas = Vec::with_capacity(hist.len());
                for (s, y, rho) in hist.iter().rev() {
                    let a = rho * dot(s, &d);
                    for (dj, yj) in d.iter_mut().zip(y) {
                        *dj -= a * yj;
                    }
                    alphas.push(a);
                }
                if let Some((s, y, _)) = hist.last() {
                    let scale = dot(s, y) / dot(y, y).max(1e-300);
                    for dj in &mut d {
                        *dj *= scale;
                    }
                }
                for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
                    let b = rho * dot(y, &d);
                    for (dj, sj) in d.iter_mut().zip(s) {
                        *dj += (a - b) * sj;
                    }
                }
                if dot(&g_cur, &d) >= 0.0 {
                    // Kinked constraints can defeat the curvature pairs;
                    // fall back to steepest descent.
                    d = g_cur.iter().map(|x| -x).collect();
                }
                // Projected Armijo backtracking.
                let mut accepted = None;
                let mut alpha = 1.0;
                for _ in 0..25 {
                    if Instant::now() >= deadline {
                        timed_out = true;
                        break 'outer;
                    }
                    let mut k_t: Vec<f64> =
                        k.iter().zip(&d).map(|(x, dj)| x + alpha * dj).collect();
                    clamp_unit(&mut k_t);
                    let step: Vec<f64> = k_t.iter().zip(&k).map(|(a, b)| a - b).collect();
                    if step.iter().all(|x| x.abs() < 1e-14) {
                        break; // projection pinned every coordinate
                    }
                    let (l_t, _) = Self::eval(problem, &k_t, &lambda, mu, &mut best)?;
                    if l_t <= l_cur + 1e-4 * dot(&g_cur, &step).min(0.0) {
                        accepted = Some(k_t);
                        break;
                    }
                    alpha *= 0.5;
                }
                let Some(k_new) = accepted else {
                    break; // line search stalled: subproblem is done
                };
                let (l_new, g_new, h_new) =
                    Self::eval_grad(problem, &k_new, &lambda, mu, &mut best)?;
                let s: Vec<f64> = k_new.iter().zip(&k).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g_cur).map(|(a, b)| a - b).collect();
                let ys = dot(&y, &s);
                if ys > 1e-12 * l2(&y) * l2(&s) {
                    hist.push((s, y, 1.0 / ys));
                    if hist.len() > self.history {
                        hist.remove(0);
                    }
                }
                k = k_new;
                l_cur = l_new;
                g_cur = g_new;
                h_cur = h_new;
                // Stationarity on the box.
                let pg = k
                    .iter()
                    .zip(&g_cur)
                    .map(|(x, g)| ((x - g).clamp(-1.0, 1.0) - x).abs())
                    .fold(0.0f64, f64::max);
                if pg <= 1e-9 {
                    break;
                }
            }
            let v = h_cur
                .iter()
                .zip(&lambda)
                .map(|(&hi, &li)| hi.max(-li / mu).abs())
                .fold(0.0f64, f64::max);
            let worst = h_cur.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            if v <= self.tol && worst <= 0.0 {
                break;
            }
            for (li, &hi) in lambda.iter_mut().zip(&h_cur) {
                *li = (*li + mu * hi).max(0.0);
            }
            if v > 0.25 * prev_v {
                mu *= self.mu_growth;
            }
            prev_v = v;
        }

        Ok(match best {
            Some(b) => SolverRun {
                k: b.k,
                iterations,
                feasible: true,
                timed_out,
            },
            None => SolverRun {
                k,
                iterations,
                feasible: false,
                timed_out,
            },
        })
    }
}

fn margin(kind: &ConstraintKind) -> f64 {
    if matches!(kind, ConstraintKind::Collision { .. }) {
        DELTA_OBS
    } else {
        0.0
    }
}

/// Cost and constraints of one horizon: squared distance of the family's
/// endpoint to the waypoint, subject to the reach-set constraint system
/// with the collision margin added.
struct TrajOptProblem<'a> {
    set: &'a ConstraintSet,
    family: &'a TrajFamily,
    waypoint: &'a [f64],
}

impl NlpProblem for TrajOptProblem<'_> {
    fn dim(&self) -> usize {
        self.set.n_k
    }

    fn cost_grad(&self, k: &[f64]) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; k.len()];
        for j in 0..k.len() {
            let r = self.family.eta1[j] * k[j] + self.family.eta2[j] - self.waypoint[j];
            f += r * r;
            g[j] = 2.0 * self.family.eta1[j] * r;
        }
        (f, g)
    }

    fn constraint_values(&self, k: &[f64]) -> Result<Vec<f64>, PzError> {
        self.set
            .items
            .iter()
            .map(|c| Ok(c.eval(k)? + margin(&c.kind)))
            .collect()
    }

    fn constraint_grads(&self, k: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), PzError> {
        let mut vals = Vec::with_capacity(self.set.items.len());
        let mut grads = Vec::with_capacity(self.set.items.len());
        for c in &self.set.items {
            let (v, g) = c.eval_grad(k)?;
            vals.push(v + margin(&c.kind));
            grads.push(g);
        }
        Ok((vals, grads))
    }
}

/// Plans one horizon with the default solver.
pub fn solve_opt(
    problem: &PlanningProblem,
    init: &InitialCondition,
    waypoint: &[f64],
) -> Result<PlanResult, PlanError> {
    solve_opt_with(problem, init, waypoint, &AugLagSolver::default())
}

/// Plans one horizon: builds the reach sets for `init`, assembles the
/// constraint system, and optimizes the endpoint toward `waypoint`. The
/// call honors one planning window of wall time (`t_p`), reporting
/// `TimedOut` when the budget ran out before a verified parameter existed.
pub fn solve_opt_with(
    problem: &PlanningProblem,
    init: &InitialCondition,
    waypoint: &[f64],
    solver: &dyn NlpSolver,
) -> Result<PlanResult, PlanError> {
    solve_horizon(problem, init, waypoint, solver).map(|(plan, _)| plan)
}

/// As [`solve_opt_with`], also handing back the per-step disturbance bounds
/// the reach sets were buffered with, so execution can run the controller
/// against the same bounds the input constraints assumed.
fn solve_horizon(
    problem: &PlanningProblem,
    init: &InitialCondition,
    waypoint: &[f64],
    solver: &dyn NlpSolver,
) -> Result<(PlanResult, DisturbanceSchedule), PlanError> {
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(problem.t_p);
    let family = TrajFamily::centered(init, problem.t_f);
    let grid = TimeGrid::new(problem.t_f, problem.n_t)?;
    let nominal = problem.model.inertia.clone();
    let boxed = problem.model.interval_params();
    let bundles = (0..problem.n_t)
        .into_par_iter()
        .map(|i| {
            build_bundle(
                &problem.model,
                init,
                &family,
                &grid,
                i,
                &problem.ctrl,
                &problem.reach,
                &nominal,
                &boxed,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sched = DisturbanceSchedule {
        dt: problem.t_f / problem.n_t as f64,
        per_step: bundles.iter().map(|b| b.input.w_m.clone()).collect(),
    };
    if Instant::now() >= deadline {
        return Ok((
            PlanResult {
                outcome: PlanOutcome::TimedOut,
                solve_seconds: start.elapsed().as_secs_f64(),
                iterations: 0,
                max_constraint: None,
            },
            sched,
        ));
    }
    let set = ConstraintSet::build(&problem.model, &bundles, &problem.obstacles)?;
    let nlp = TrajOptProblem {
        set: &set,
        family: &family,
        waypoint,
    };
    let run = solver.solve(&nlp, &vec![0.0; problem.model.n_q], deadline)?;
    // Authoritative recheck of whatever the solver offered.
    let max_c = nlp
        .constraint_values(&run.k)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let outcome = if run.feasible && max_c <= 0.0 {
        PlanOutcome::Feasible(run.k)
    } else if run.timed_out {
        PlanOutcome::TimedOut
    } else {
        PlanOutcome::Infeasible
    };
    Ok((
        PlanResult {
            outcome,
            solve_seconds: start.elapsed().as_secs_f64(),
            iterations: run.iterations,
            max_constraint: Some(max_c),
        },
        sched,
    ))
}

/// Straight-line high-level planner: one waypoint per horizon, at most
/// `step` (sup norm) from the current position toward the goal.
pub fn straight_line_hlp(q_current: &[f64], q_goal: &[f64], step: f64) -> Vec<f64> {
    let d: Vec<f64> = q_goal.iter().zip(q_current).map(|(g, c)| g - c).collect();
    let n = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if n <= step {
        return q_goal.to_vec();
    }
    q_current
        .iter()
        .zip(&d)
        .map(|(c, dj)| c + step * dj / n)
        .collect()
}

/// Receding-horizon episode settings.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeConfig {
    /// Sup-norm distance at which the goal counts as reached.
    pub goal_tol: f64,
    /// Horizon cap; hitting it ends the episode with a braking tail.
    pub max_iterations: usize,
    /// Integrator step of the closed-loop simulation.
    pub sim_dt: f64,
    /// Waypoint spacing of the straight-line high-level planner.
    pub hlp_step: f64,
    /// Seed for the ground-truth inertial parameters.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            goal_tol: 0.05,
            max_iterations: 40,
            sim_dt: 1e-3,
            hlp_step: std::f64::consts::PI / 24.0,
            seed: 0,
        }
    }
}

/// One executed horizon.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeIterationLog {
    pub index: usize,
    pub init: InitialCondition,
    pub waypoint: Vec<f64>,
    pub k: Vec<f64>,
    pub plan: PlanResult,
}

/// Full episode record: every executed horizon plus the stitched
/// closed-loop simulation in absolute time.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeLog {
    /// The last desired trajectory ends within `goal_tol` of the goal; the
    /// physical state adds at most the tracking bound on top.
    pub reached_goal: bool,
    /// The episode ended on a braking tail instead of a goal stop.
    pub braked: bool,
    pub iterations: Vec<EpisodeIterationLog>,
    /// Plan attempt that failed and triggered the brake, or the no-motion
    /// episode when the very first solve fails.
    pub failed_plan: Option<PlanResult>,
    pub sim: SimLog,
    pub final_q: Vec<f64>,
    pub final_qd: Vec<f64>,
}

/// Appends a trajectory-local simulation segment at absolute offset
/// `t_off`, dropping the duplicated boundary sample.
fn append_sim(log: &mut SimLog, seg: SimLog, t_off: f64) {
    for mut step in seg.steps {
        step.t += t_off;
        if log
            .steps
            .last()
            .is_some_and(|p| (step.t - p.t).abs() <= 1e-9)
        {
            continue;
        }
        log.steps.push(step);
    }
}

/// Runs a full episode with the ground-truth inertial parameters sampled
/// from the model's uncertainty set (seeded, reproducible).
pub fn receding_horizon(
    problem: &PlanningProblem,
    cfg: &EpisodeConfig,
) -> Result<EpisodeLog, PlanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let true_params = problem.model.sample_params_entrywise(&mut rng);
    receding_horizon_with_params(problem, cfg, &true_params)
}

/// Same episode loop with the ground truth injected, for worst-case runs.
pub fn receding_horizon_with_params(
    problem: &PlanningProblem,
    cfg: &EpisodeConfig,
    true_params: &InertialParams,
) -> Result<EpisodeLog, PlanError> {
    problem.validate()?;
    if cfg.max_iterations == 0 {
        return Err(PlanError::Invalid("need at least one iteration".into()));
    }
    let n = problem.model.n_q;
    let nominal = problem.model.inertia.clone();
    let boxed = problem.model.interval_params();

    let mut log = EpisodeLog {
        reached_goal: false,
        braked: false,
        iterations: Vec::new(),
        failed_plan: None,
        sim: SimLog::default(),
        final_q: problem.q_start.clone(),
        final_qd: vec![0.0; n],
    };
    if sup_dist(&problem.q_start, &problem.q_goal) <= cfg.goal_tol {
        log.reached_goal = true;
        return Ok(log);
    }

    let solver = AugLagSolver::default();
    let mut init = InitialCondition::rest(problem.q_start.clone());
    let mut waypoint = straight_line_hlp(&init.q, &problem.q_goal, cfg.hlp_step);
    let (first, first_sched) = solve_horizon(problem, &init, &waypoint, &solver)?;
    let Some(k0) = first.outcome.feasible_k().map(<[f64]>::to_vec) else {
        // Never moved: the robot is still at rest, which is trivially safe.
        log.failed_plan = Some(first);
        return Ok(log);
    };
    let mut k = k0;
    let mut plan = first;
    let mut sched = first_sched;
    let mut e0 = vec![0.0; n];
    let mut de0 = vec![0.0; n];

    let mut m = 0usize;
    loop {
        let family = TrajFamily::centered(&init, problem.t_f);
        let traj = bernstein_coeffs(&init, &k, &family)?;
        log.iterations.push(EpisodeIterationLog {
            index: m,
            init: init.clone(),
            waypoint: waypoint.clone(),
            k: k.clone(),
            plan: plan.clone(),
        });
        let t_off = m as f64 * problem.t_p;
        let cur_sched = sched.clone();
        let simulate = |span: (f64, f64), e0: &[f64], de0: &[f64]| {
            simulate_closed_loop_span(
                &problem.model,
                &traj,
                true_params,
                &problem.ctrl,
                &nominal,
                &boxed,
                ControlLaw::Robust,
                Some(&cur_sched),
                cfg.sim_dt,
                span,
                e0,
                de0,
            )
        };

        // Goal stop: the desired endpoint is close enough, so run the whole
        // trajectory (it brakes to rest at t_f) and finish.
        if sup_dist(&family.final_position(&k), &problem.q_goal) <= cfg.goal_tol {
            append_sim(&mut log.sim, simulate((0.0, problem.t_f), &e0, &de0)?, t_off);
            log.reached_goal = true;
            break;
        }
        // Horizon cap: no further solves, so ride the braking tail down.
        if m + 1 >= cfg.max_iterations {
            append_sim(&mut log.sim, simulate((0.0, problem.t_f), &e0, &de0)?, t_off);
            log.braked = true;
            break;
        }

        let (q_n, qd_n, qdd_n) = traj.eval(problem.t_p)?;
        let init_next = InitialCondition {
            q: q_n,
            qd: qd_n,
            qdd: qdd_n,
        };
        let waypoint_next = straight_line_hlp(&init_next.q, &problem.q_goal, cfg.hlp_step);

        // Solve the next horizon while executing this one.
        let (next, seg) = std::thread::scope(|s| {
            let handle = s.spawn(|| solve_horizon(problem, &init_next, &waypoint_next, &solver));
            let seg = simulate((0.0, problem.t_p), &e0, &de0);
            (handle.join(), seg)
        });
        let (next_plan, next_sched) =
            next.map_err(|_| PlanError::Invalid("planner thread panicked".into()))??;
        let seg = seg?;
        let last = seg.steps.last().expect("span simulation logs its endpoint");
        e0 = last.e.clone();
        de0 = last.de.clone();
        append_sim(&mut log.sim, seg, t_off);

        match next_plan.outcome.feasible_k().map(<[f64]>::to_vec) {
            Some(k_next) => {
                k = k_next;
                plan = next_plan;
                sched = next_sched;
                init = init_next;
                waypoint = waypoint_next;
                m += 1;
            }
            None => {
                log.failed_plan = Some(next_plan);
                append_sim(
                    &mut log.sim,
                    simulate((problem.t_p, problem.t_f), &e0, &de0)?,
                    t_off,
                );
                log.braked = true;
                break;
            }
        }
    }
    if let Some(step) = log.sim.steps.last() {
        log.final_q = step.q.clone();
        log.final_qd = step.qd.clone();
    }
    Ok(log)
}

/// Axis-aligned bounds of every link's occupancy set at the executed
/// parameter: one `(lo, hi)` pair per link, per time step. Rebuilt from
/// scratch so external plots show exactly what the constraints saw.
pub fn fo_bound_boxes(
    problem: &PlanningProblem,
    init: &InitialCondition,
    k: &[f64],
) -> Result<Vec<Vec<([f64; 3], [f64; 3])>>, PlanError> {
    let family = TrajFamily::centered(init, problem.t_f);
    let grid = TimeGrid::new(problem.t_f, problem.n_t)?;
    let nominal = problem.model.inertia.clone();
    let boxed = problem.model.interval_params();
    let assign: Vec<(IndetId, f64)> = k
        .iter()
        .enumerate()
        .map(|(j, &v)| (IndetId::Param(j as u32), v))
        .collect();
    (0..problem.n_t)
        .into_par_iter()
        .map(|i| {
            let bundle = build_bundle(
                &problem.model,
                init,
                &family,
                &grid,
                i,
                &problem.ctrl,
                &problem.reach,
                &nominal,
                &boxed,
            )?;
            bundle
                .fo
                .iter()
                .map(|fo| {
                    let (lo, hi) = fo.slice(&assign)?.bounds();
                    Ok(([lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]]))
                })
                .collect::<Result<Vec<_>, PzError>>()
                .map_err(PlanError::from)
        })
        .collect()
}

/// Sampling audit settings.
#[derive(Clone, Debug)]
pub struct AuditConfig {
    /// Subdivisions per logged interval for interpolated collision checks.
    pub density: usize,
    /// Sampled points per link volume (the center is always checked).
    pub volume_samples: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            density: 10,
            volume_samples: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    /// Configurations checked for collision (logged plus interpolated).
    pub states_checked: usize,
    /// Steps whose jump exceeds ten times the velocity-limit travel.
    pub teleports: usize,
    /// Logged states outside position, velocity, or torque limits.
    pub limit_violations: usize,
    /// Checked configurations with a sampled volume point inside an obstacle.
    pub collision_violations: usize,
    /// Logged states whose modified tracking error leaves the certified ball.
    pub r_violations: usize,
    /// Smallest halfspace clearance over every sampled point and obstacle.
    pub min_clearance: f64,
    pub max_r_norm: f64,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.teleports == 0
            && self.limit_violations == 0
            && self.collision_violations == 0
            && self.r_violations == 0
    }
}

fn check_collision(
    model: &RobotModel,
    obstacles: &[Obstacle],
    q: &[f64],
    samples: usize,
    rng: &mut ChaCha8Rng,
    rep: &mut AuditReport,
) {
    rep.states_checked += 1;
    if obstacles.is_empty() {
        return;
    }
    let mut hit = false;
    for vol in model.forward_occupancy(q) {
        let c = Vector3::from(vol.center);
        let mut points = Vec::with_capacity(samples + 1);
        points.push(c);
        for _ in 0..samples {
            let mut p = c;
            for g in &vol.generators {
                p += rng.gen_range(-1.0..=1.0) * Vector3::from(*g);
            }
            points.push(p);
        }
        for p in &points {
            for obs in obstacles {
                let m = obs.margin(p);
                rep.min_clearance = rep.min_clearance.min(m);
                if m <= 0.0 {
                    hit = true;
                }
            }
        }
    }
    if hit {
        rep.collision_violations += 1;
    }
}

/// Replays a finished episode against the model limits, the controller's
/// tracking ball, and the scene obstacles. Interpolates between logged
/// steps and samples points inside each link volume, so it is a sampling
/// check for bookkeeping errors, not a replacement for the reach-set
/// guarantees.
pub fn safety_audit(
    model: &RobotModel,
    log: &EpisodeLog,
    obstacles: &[Obstacle],
    ctrl: &ControllerConfig,
    cfg: &AuditConfig,
) -> AuditReport {
    let eps = ctrl.uniform_bounds().eps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rep = AuditReport {
        states_checked: 0,
        teleports: 0,
        limit_violations: 0,
        collision_violations: 0,
        r_violations: 0,
        min_clearance: f64::INFINITY,
        max_r_norm: 0.0,
    };
    let tol = 1e-9;
    let qd_cap = model
        .joints
        .iter()
        .map(|j| j.qd_lim[0].abs().max(j.qd_lim[1].abs()))
        .fold(0.0f64, f64::max);

    let steps = &log.sim.steps;
    for (idx, st) in steps.iter().enumerate() {
        let mut bad = false;
        for (j, joint) in model.joints.iter().enumerate() {
            bad |= st.q[j] < joint.q_lim[0] - tol || st.q[j] > joint.q_lim[1] + tol;
            bad |= st.qd[j] < joint.qd_lim[0] - tol || st.qd[j] > joint.qd_lim[1] + tol;
            bad |= st.u[j] < joint.u_lim[0] - tol || st.u[j] > joint.u_lim[1] + tol;
        }
        if bad {
            rep.limit_violations += 1;
        }
        // Tracking ball, recomputed from the logged errors.
        let r: Vec<f64> = st
            .de
            .iter()
            .zip(ctrl.k_r.iter().zip(&st.e))
            .map(|(de, (kr, e))| de + kr * e)
            .collect();
        let rn = l2(&r);
        rep.max_r_norm = rep.max_r_norm.max(rn);
        if rn > eps + tol {
            rep.r_violations += 1;
        }
        check_collision(model, obstacles, &st.q, cfg.volume_samples, &mut rng, &mut rep);
        if let Some(nx) = steps.get(idx + 1) {
            let dt = nx.t - st.t;
            if sup_dist(&nx.q, &st.q) > qd_cap * dt * 10.0 + tol {
                rep.teleports += 1;
            }
            for d in 1..cfg.density {
                let lam = d as f64 / cfg.density as f64;
                let q: Vec<f64> = st
                    .q
                    .iter()
                    .zip(&nx.q)
                    .map(|(a, b)| a + lam * (b - a))
                    .collect();
                check_collision(model, obstacles, &q, cfg.volume_samples, &mut rng, &mut rep);
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn two_link() -> RobotModel {
        RobotModel::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../models/two_link.json"
        ))
        .unwrap()
    }

    fn test_problem(
        model: RobotModel,
        obstacles: Vec<Obstacle>,
        q_start: Vec<f64>,
        q_goal: Vec<f64>,
    ) -> PlanningProblem {
        let (sm, sx) = model.eigen_bounds(2000, 7, 0.05);
        let n = model.n_q;
        // v_m sets the tracking guarantee and with it the tube the reach sets
        // must buffer; 1e-4 keeps the position buffer around 0.02 rad
        let ctrl = ControllerConfig::new(vec![5.0; n], 1e-4, 1.0, sm, sx).unwrap();
        PlanningProblem {
            model,
            obstacles,
            q_start,
            q_goal,
            t_p: 1.0,
            t_f: 2.0,
            n_t: 4,
            ctrl,
            reach: ReachConfig::default(),
        }
    }

    #[test]
    fn hlp_clamps_to_goal_and_steps_toward_it() {
        let goal = vec![0.5, -0.3];
        assert_eq!(straight_line_hlp(&[0.45, -0.25], &goal, 0.2), goal);

        let cur = vec![0.0, 0.0];
        let w = straight_line_hlp(&cur, &goal, 0.1);
        assert_relative_eq!(sup_dist(&w, &cur), 0.1, epsilon = 1e-12);
        // collinear with the segment and strictly between its endpoints
        let lam = w[0] / goal[0];
        assert_relative_eq!(w[1], lam * goal[1], epsilon = 1e-12);
        assert!(lam > 0.0 && lam < 1.0);
    }

    #[test]
    fn unconstrained_solve_reaches_waypoint() {
        let start = vec![0.3, -0.4];
        let problem = test_problem(two_link(), vec![], start.clone(), vec![1.0, 1.0]);
        let init = InitialCondition::rest(start.clone());
        // a waypoint at a quarter of the family half-range is attainable
        let wp: Vec<f64> = start.iter().map(|q| q + PI / 192.0).collect();
        let t0 = Instant::now();
        let res = solve_opt(&problem, &init, &wp).unwrap();
        let wall = t0.elapsed().as_secs_f64();
        assert!(wall <= problem.t_p + 0.05, "wall {wall}");

        let k = res.outcome.feasible_k().expect("feasible").to_vec();
        let family = TrajFamily::centered(&init, problem.t_f);
        let end = family.final_position(&k);
        for j in 0..2 {
            assert_relative_eq!(end[j], wp[j], epsilon = 1e-5);
        }
        assert!(res.max_constraint.unwrap() <= 0.0);
    }

    #[test]
    fn infeasible_when_arm_is_enclosed() {
        let start = vec![0.3, -0.4];
        let obs = Obstacle::from_box([0.0; 3], [10.0; 3]).unwrap();
        let problem = test_problem(two_link(), vec![obs], start.clone(), vec![0.6, -0.2]);
        let init = InitialCondition::rest(start);
        let t0 = Instant::now();
        let res = solve_opt(&problem, &init, &[0.35, -0.35]).unwrap();
        assert!(t0.elapsed().as_secs_f64() <= problem.t_p + 0.05);
        assert_eq!(res.outcome, PlanOutcome::Infeasible);
        assert!(res.max_constraint.unwrap() > 0.0);
    }

    #[test]
    fn reaches_goal_with_receding_horizon() {
        let start = vec![0.3, -0.4];
        let goal = vec![0.6, -0.6];
        let problem = test_problem(two_link(), vec![], start.clone(), goal.clone());
        let cfg = EpisodeConfig {
            max_iterations: 30,
            seed: 7,
            ..Default::default()
        };
        let log = receding_horizon(&problem, &cfg).unwrap();
        assert!(
            log.reached_goal,
            "iterations {}, braked {}",
            log.iterations.len(),
            log.braked
        );
        assert!(!log.braked);

        // the final desired endpoint is inside the tolerance, the physical
        // state adds at most the tracking bound
        let last = log.iterations.last().unwrap();
        let family = TrajFamily::centered(&last.init, problem.t_f);
        assert!(sup_dist(&family.final_position(&last.k), &goal) <= cfg.goal_tol + 1e-12);
        let ub = problem.ctrl.uniform_bounds();
        for j in 0..2 {
            assert!((log.final_q[j] - goal[j]).abs() <= cfg.goal_tol + ub.eps_p[j] + 1e-9);
        }

        // every solve stayed within its planning window
        for it in &log.iterations {
            assert!(it.plan.solve_seconds <= problem.t_p + 0.05);
        }

        // smooth handoff: every stored init equals the previous trajectory
        // evaluated at the replan time
        for w in log.iterations.windows(2) {
            let fam = TrajFamily::centered(&w[0].init, problem.t_f);
            let traj = bernstein_coeffs(&w[0].init, &w[0].k, &fam).unwrap();
            let (q, qd, qdd) = traj.eval(problem.t_p).unwrap();
            for j in 0..2 {
                assert_relative_eq!(q[j], w[1].init.q[j], epsilon = 1e-9);
                assert_relative_eq!(qd[j], w[1].init.qd[j], epsilon = 1e-9);
                assert_relative_eq!(qdd[j], w[1].init.qdd[j], epsilon = 1e-9);
            }
        }

        // the stitched timeline is uniform with no duplicated samples
        for w in log.sim.steps.windows(2) {
            assert!((w[1].t - w[0].t - cfg.sim_dt).abs() < 1e-9);
        }

        let audit = safety_audit(
            &problem.model,
            &log,
            &[],
            &problem.ctrl,
            &AuditConfig::default(),
        );
        assert!(audit.is_clean(), "{audit:?}");
        assert!(audit.max_r_norm <= ub.eps + 1e-9);
    }

    #[test]
    fn episode_with_certified_clearance_stays_clean() {
        let start = vec![0.3, -0.4];
        let goal = vec![0.6, -0.6];
        // a slab below the whole workspace sweep: always separated, but
        // present in every constraint set
        let obs = Obstacle::from_box([0.5, -0.5, 0.0], [0.3; 3]).unwrap();
        let problem = test_problem(two_link(), vec![obs.clone()], start, goal);
        problem.validate().unwrap();
        let cfg = EpisodeConfig {
            max_iterations: 30,
            seed: 5,
            ..Default::default()
        };
        let log = receding_horizon(&problem, &cfg).unwrap();
        assert!(log.reached_goal, "braked {}", log.braked);
        let audit = safety_audit(
            &problem.model,
            &log,
            std::slice::from_ref(&obs),
            &problem.ctrl,
            &AuditConfig::default(),
        );
        assert!(audit.is_clean(), "{audit:?}");
        assert!(audit.min_clearance > 0.0);
    }

    #[test]
    fn trivial_goal_returns_immediately() {
        let q = vec![0.3, -0.4];
        let problem = test_problem(two_link(), vec![], q.clone(), q.clone());
        let log = receding_horizon(&problem, &EpisodeConfig::default()).unwrap();
        assert!(log.reached_goal);
        assert!(log.iterations.is_empty());
        assert!(log.sim.steps.is_empty());
        assert_eq!(log.final_q, q);
    }

    #[test]
    fn braking_tail_stops_the_arm() {
        let start = vec![0.3, -0.4];
        let goal = vec![0.9, -0.9]; // too far for a single horizon
        let problem = test_problem(two_link(), vec![], start, goal);
        let cfg = EpisodeConfig {
            max_iterations: 1,
            seed: 3,
            ..Default::default()
        };
        let log = receding_horizon(&problem, &cfg).unwrap();
        assert!(log.braked);
        assert!(!log.reached_goal);
        assert_eq!(log.iterations.len(), 1);
        // the tail runs to t_f and the arm is essentially stopped there
        assert_relative_eq!(log.sim.steps.last().unwrap().t, problem.t_f, epsilon = 1e-9);
        for j in 0..2 {
            assert!(log.final_qd[j].abs() < 0.05, "qd {}", log.final_qd[j]);
        }
        let audit = safety_audit(
            &problem.model,
            &log,
            &[],
            &problem.ctrl,
            &AuditConfig::default(),
        );
        assert!(audit.is_clean(), "{audit:?}");
    }

    #[test]
    fn audit_flags_corrupted_logs() {
        let model = two_link();
        let start = vec![0.3, -0.4];
        let problem = test_problem(model.clone(), vec![], start, vec![0.45, -0.5]);
        let cfg = EpisodeConfig {
            max_iterations: 10,
            seed: 11,
            ..Default::default()
        };
        let mut log = receding_horizon(&problem, &cfg).unwrap();
        assert!(log.reached_goal);

        // obstacle sitting exactly on link 1's volume for a far-away pose
        let q_bad = vec![2.0, 1.0];
        let c = model.forward_occupancy(&q_bad)[1].center;
        let obs = Obstacle::from_box(c, [0.2; 3]).unwrap();
        let audit_cfg = AuditConfig::default();
        let clean = safety_audit(
            &model,
            &log,
            std::slice::from_ref(&obs),
            &problem.ctrl,
            &audit_cfg,
        );
        assert!(clean.is_clean(), "{clean:?}");
        assert!(clean.min_clearance > 0.0);

        // teleport one state into the obstacle and blow up another's error
        let mid = log.sim.steps.len() / 2;
        log.sim.steps[mid].q = q_bad;
        log.sim.steps[mid + 30].e = vec![10.0, 10.0];
        let bad = safety_audit(
            &model,
            &log,
            std::slice::from_ref(&obs),
            &problem.ctrl,
            &audit_cfg,
        );
        assert!(bad.teleports >= 1);
        assert!(bad.collision_violations >= 1);
        assert!(bad.r_violations >= 1);
        assert!(!bad.is_clean());
    }

    #[test]
    fn validate_rejects_bad_problems() {
        let model = two_link();
        let start = vec![0.3, -0.4];
        let goal = vec![0.5, -0.5];

        // start pose inside an obstacle
        let c = model.forward_occupancy(&start)[1].center;
        let obs = Obstacle::from_box(c, [0.2; 3]).unwrap();
        let p = test_problem(model.clone(), vec![obs], start.clone(), goal.clone());
        assert!(matches!(p.validate(), Err(PlanError::Invalid(_))));

        // degenerate timing
        let mut p = test_problem(model.clone(), vec![], start.clone(), goal.clone());
        p.t_p = p.t_f;
        assert!(p.validate().is_err());

        // dimension mismatch
        let mut p = test_problem(model.clone(), vec![], start.clone(), goal.clone());
        p.q_goal = vec![0.1];
        assert!(p.validate().is_err());

        // out-of-limit goal
        let mut p = test_problem(model.clone(), vec![], start.clone(), goal.clone());
        p.q_goal = vec![4.0, 0.0];
        assert!(p.validate().is_err());

        assert!(test_problem(model, vec![], start, goal).validate().is_ok());
    }

    #[test]
    fn episode_log_serializes_to_json() {
        let q = vec![0.3, -0.4];
        let problem = test_problem(two_link(), vec![], q.clone(), q);
        let log = receding_horizon(&problem, &EpisodeConfig::default()).unwrap();
        let json = serde_json::to_string(&log).unwrap();
        assert!(json.contains("\"reached_goal\":true"));
    }
}

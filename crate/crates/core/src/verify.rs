//! Sampling verification suites, runnable at arbitrary sample counts.
//!
//! Every check draws random realizations, pushes them through the exact
//! arithmetic, and counts violations of the corresponding set enclosure (or,
//! for gradients, disagreements with central finite differences). These are
//! the same oracles the unit tests are built on, packaged so batch runs and
//! the command line can execute them with much higher sample counts.
//!
//! A report with `violations == 0` is statistical evidence, not proof: the
//! enclosures are proved sound by construction, these suites guard against
//! bookkeeping errors in the implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{ConstraintSet, Obstacle};
use crate::controller::{robust_input_with_bound, ControllerConfig};
use crate::dynamics::{
    irnea, mass_times_r, pzrnea, rnea, ModifiedState, PzInertialParams, PzJointState,
    TotalFeedbackState,
};
use crate::interval::{Interval, IntervalMatrix};
use crate::polyzono::{pz_mul_scalar, pz_taylor, Cos, IndetId, PolyZonotope, Sin};
use crate::reachsets::{build_bundle, ReachConfig, ReachSetBundle};
use crate::robot::RobotModel;
use crate::trajectory::{bernstein_coeffs, InitialCondition, TimeGrid, TrajFamily};

/// Outcome of one verification suite.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    /// Realization checks performed.
    pub samples: usize,
    pub violations: usize,
    /// Largest violation magnitude seen (0 when clean); for the gradient
    /// suite, the largest relative error among non-kinked comparisons.
    pub worst: f64,
}

impl CheckReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: 0,
            violations: 0,
            worst: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Records one containment check: `x` must lie in `[lo, hi]` up to
    /// `slack`.
    fn check_in(&mut self, x: f64, lo: f64, hi: f64, slack: f64) {
        self.samples += 1;
        let excess = (lo - x).max(x - hi);
        if excess > slack {
            self.violations += 1;
            self.worst = self.worst.max(excess);
        }
    }
}

/// Scalar and matrix interval arithmetic containment: add, sub, mul, sin,
/// cos, matrix product, cross product.
pub fn interval_ops(samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("interval-ops");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sorted_pair = |rng: &mut ChaCha8Rng, scale: f64| {
        let a = rng.gen_range(-scale..scale);
        let b = rng.gen_range(-scale..scale);
        (a.min(b), a.max(b))
    };
    let slack = 1e-12;
    for _ in 0..samples / 2 {
        let (a, b) = sorted_pair(&mut rng, 10.0);
        let (c, d) = sorted_pair(&mut rng, 10.0);
        let x_iv = Interval::new(a, b).unwrap();
        let y_iv = Interval::new(c, d).unwrap();
        let x = rng.gen_range(a..=b);
        let y = rng.gen_range(c..=d);
        for (real, set) in [
            (x + y, x_iv + y_iv),
            (x - y, x_iv - y_iv),
            (x * y, x_iv * y_iv),
            (x.sin(), x_iv.sin()),
            (x.cos(), x_iv.cos()),
        ] {
            rep.check_in(real, set.lo(), set.hi(), slack * (1.0 + real.abs()));
        }
    }
    let random_matrix = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let mut m = IntervalMatrix::zeros(rows, cols);
        let mut pts = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let (lo, hi) = sorted_pair(rng, 3.0);
                m.set(i, j, Interval::new(lo, hi).unwrap());
                pts.push(rng.gen_range(lo..=hi));
            }
        }
        (m, pts)
    };
    for _ in 0..samples / 2 {
        let (xm, x) = random_matrix(&mut rng, 3, 3);
        let (ym, y) = random_matrix(&mut rng, 3, 1);
        let prod = xm.matmul(&ym).unwrap();
        for i in 0..3 {
            let real = (0..3).map(|k| x[i * 3 + k] * y[k]).sum::<f64>();
            let set = prod.get(i, 0);
            rep.check_in(real, set.lo(), set.hi(), slack * (1.0 + real.abs()));
        }
        let (am, a) = random_matrix(&mut rng, 3, 1);
        let cr = am.cross(&ym).unwrap();
        let real = [
            a[1] * y[2] - a[2] * y[1],
            a[2] * y[0] - a[0] * y[2],
            a[0] * y[1] - a[1] * y[0],
        ];
        for (i, r) in real.iter().enumerate() {
            let set = cr.get(i, 0);
            rep.check_in(*r, set.lo(), set.hi(), slack * (1.0 + r.abs()));
        }
    }
    rep
}

fn random_pz(rng: &mut ChaCha8Rng, dim: usize, n_ids: usize) -> PolyZonotope {
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

fn random_assignment(rng: &mut ChaCha8Rng, ids: &[IndetId]) -> Vec<(IndetId, f64)> {
    ids.iter().map(|&id| (id, rng.gen_range(-1.0..1.0))).collect()
}

fn eval_at(pz: &PolyZonotope, assign: &[(IndetId, f64)]) -> Vec<f64> {
    pz.eval(&|id| assign.iter().find(|(i, _)| *i == id).map(|(_, v)| *v))
        .expect("assignment covers every id")
}

/// Polynomial zonotope operation containment: bounds, tight bounds, sums,
/// scalar products (exactness and containment), order reduction, and
/// slice-then-evaluate consistency.
pub fn pz_ops(samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("pz-ops");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_set = 10;
    for _ in 0..samples.div_ceil(per_set) {
        let a = random_pz(&mut rng, 2, 3);
        let b = random_pz(&mut rng, 2, 3);
        let sum = a.add(&b).unwrap();
        let sa = random_pz(&mut rng, 1, 2);
        let sb = random_pz(&mut rng, 1, 2);
        let prod = pz_mul_scalar(&sa, &sb).unwrap();
        let reduced = a.reduce(2);
        let mut union: Vec<IndetId> = a.ids().to_vec();
        for pz in [&b, &sa, &sb] {
            for id in pz.ids() {
                if !union.contains(id) {
                    union.push(*id);
                }
            }
        }
        for _ in 0..per_set {
            let assign = random_assignment(&mut rng, &union);
            let xa = eval_at(&a, &assign);
            let xb = eval_at(&b, &assign);

            let (lo, hi) = a.bounds();
            let (tlo, thi) = a.bounds_tight();
            for d in 0..2 {
                let slack = 1e-11 * (1.0 + xa[d].abs());
                rep.check_in(xa[d], lo[d], hi[d], slack);
                rep.check_in(xa[d], tlo[d], thi[d], slack);
                // tight bounds never looser than the conservative ones
                rep.check_in(tlo[d], lo[d], f64::INFINITY, 1e-12);
                rep.check_in(thi[d], f64::NEG_INFINITY, hi[d], 1e-12);
            }

            let xs = eval_at(&sum, &assign);
            let (rlo, rhi) = reduced.bounds();
            for d in 0..2 {
                let want = xa[d] + xb[d];
                let slack = 1e-11 * (1.0 + want.abs());
                rep.check_in(xs[d], want, want, slack);
                rep.check_in(xa[d], rlo[d], rhi[d], slack);
            }

            let pa = eval_at(&sa, &assign)[0];
            let pb = eval_at(&sb, &assign)[0];
            let pp = eval_at(&prod, &assign)[0];
            let want = pa * pb;
            let slack = 1e-10 * (1.0 + want.abs());
            rep.check_in(pp, want, want, slack);
            let (plo, phi) = prod.bounds();
            rep.check_in(want, plo[0], phi[0], slack);

            // slicing half the ids then evaluating the rest matches a
            // direct evaluation
            let n_half = assign.len() / 2;
            let a_sliced = a.slice(&assign[..n_half]).unwrap();
            let via = eval_at(&a_sliced, &assign[n_half..]);
            for d in 0..2 {
                let slack = 1e-11 * (1.0 + xa[d].abs());
                rep.check_in(via[d], xa[d], xa[d], slack);
            }
        }
    }
    rep
}

/// Taylor sine/cosine enclosures contain the true values at sampled inputs.
pub fn taylor_trig(samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("taylor-trig");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_input = 20;
    for trial in 0..samples.div_ceil(per_input) {
        let mid = rng.gen_range(-3.0..3.0);
        let rad = rng.gen_range(0.0..0.6);
        let p = PolyZonotope::new(
            vec![mid],
            vec![IndetId::Time(1), IndetId::Param(0)],
            vec![
                (vec![rad * 0.7], vec![1, 0]),
                (vec![rad * 0.3], vec![1, 1]),
            ],
        )
        .unwrap();
        let degree = 2 + (trial % 5);
        let sin_enc = pz_taylor(&Sin, &p, degree).unwrap();
        let cos_enc = pz_taylor(&Cos, &p, degree).unwrap();
        for _ in 0..per_input / 2 {
            let assign = random_assignment(&mut rng, p.ids());
            let x = eval_at(&p, &assign)[0];
            // the fresh remainder ids stay free: slice what is shared and
            // bound the rest
            let s = sin_enc.slice(&assign).unwrap().bounds_scalar();
            rep.check_in(x.sin(), s.lo(), s.hi(), 1e-12);
            let c = cos_enc.slice(&assign).unwrap().bounds_scalar();
            rep.check_in(x.cos(), c.lo(), c.hi(), 1e-12);
        }
    }
    rep
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> ModifiedState {
    let mut draw = |s: f64| (0..n).map(|_| rng.gen_range(-s..s)).collect::<Vec<_>>();
    ModifiedState {
        q: draw(3.0),
        qd: draw(2.0),
        qd_a: draw(2.0),
        qdd_a: draw(4.0),
    }
}

/// Interval inverse dynamics contains the torques of parameters sampled
/// inside the uncertainty box, and the interval mass-matrix product
/// contains its sampled realizations.
pub fn irnea_containment(model: &RobotModel, samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("irnea");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let iv = model.interval_params();
    let n = model.n_q;
    let per_state = 10;
    for _ in 0..samples.div_ceil(2 * per_state) {
        let st = random_state(&mut rng, n);
        let bounds = irnea(model, &st, &iv, model.base_accel());
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mr = mass_times_r(model, &st.q, &r, &iv);
        for _ in 0..per_state {
            let params = model.sample_params_entrywise(&mut rng);
            let u = rnea(model, &st, &params, model.base_accel());
            for (uj, bj) in u.iter().zip(&bounds) {
                rep.check_in(*uj, bj.lo(), bj.hi(), 1e-10 * (1.0 + uj.abs()));
            }
            let m = crate::dynamics::mass_matrix(model, &st.q, &params);
            for i in 0..n {
                let want = (0..n).map(|j| m[(i, j)] * r[j]).sum::<f64>();
                rep.check_in(want, mr[i].lo(), mr[i].hi(), 1e-10 * (1.0 + want.abs()));
            }
        }
    }
    rep
}

/// Polynomial-zonotope inverse dynamics over live position, velocity,
/// acceleration, and parameter indeterminates contains every realization's
/// true torque after slicing.
pub fn pzrnea_containment(model: &RobotModel, samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("pzrnea");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_q;
    let per_window = 200;
    for _ in 0..samples.div_ceil(per_window * n) {
        let q0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let qd0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let qdd0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let iv = model.interval_params();
        let params = PzInertialParams::from_intervals(&iv);
        let mut ids: Vec<IndetId> = params.ids();
        let mut joints = Vec::with_capacity(n);
        for j in 0..n {
            let tid = IndetId::Time(j as u32);
            let eid = IndetId::ErrVel(j as u32);
            ids.push(tid);
            ids.push(eid);
            let q_pz = PolyZonotope::from_interval(Interval::centered(q0[j], 0.05), tid);
            let qd_pz = PolyZonotope::from_interval(Interval::centered(qd0[j], 0.1), tid);
            let qda_pz = PolyZonotope::from_interval(Interval::centered(qd0[j], 0.02), eid);
            let qdda_pz = PolyZonotope::from_interval(Interval::centered(qdd0[j], 0.2), eid);
            joints.push(PzJointState::from_position_pz(&q_pz, qd_pz, qda_pz, qdda_pz, 6).unwrap());
        }
        let u_pz = pzrnea(model, &joints, &params, model.base_accel(), 120).unwrap();

        for _ in 0..per_window {
            let sigma = random_assignment(&mut rng, &ids);
            let assign = |id: IndetId| sigma.iter().find(|(i, _)| *i == id).map(|(_, v)| *v);
            let delta = params.realize(&assign).unwrap();
            let mut st = ModifiedState {
                q: vec![0.0; n],
                qd: vec![0.0; n],
                qd_a: vec![0.0; n],
                qdd_a: vec![0.0; n],
            };
            for j in 0..n {
                let s = |id: IndetId| assign(id).unwrap();
                let (tid, eid) = (IndetId::Time(j as u32), IndetId::ErrVel(j as u32));
                st.q[j] = q0[j] + 0.05 * s(tid);
                st.qd[j] = qd0[j] + 0.1 * s(tid);
                st.qd_a[j] = qd0[j] + 0.02 * s(eid);
                st.qdd_a[j] = qdd0[j] + 0.2 * s(eid);
            }
            let u = rnea(model, &st, &delta, model.base_accel());
            for (pz, want) in u_pz.iter().zip(&u) {
                let b = pz.slice(&sigma).unwrap().bounds_scalar();
                rep.check_in(*want, b.lo(), b.hi(), 1e-9 * (1.0 + want.abs()));
            }
        }
    }
    rep
}

struct BundleFixture {
    init: InitialCondition,
    family: TrajFamily,
    grid: TimeGrid,
    bundle: ReachSetBundle,
    cfg: ControllerConfig,
}

fn random_bundle(model: &RobotModel, rng: &mut ChaCha8Rng, step: usize) -> BundleFixture {
    let n = model.n_q;
    let init = InitialCondition {
        q: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        qd: (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        qdd: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    let (sm, sx) = model.eigen_bounds(2000, 7, 0.05);
    let cfg = ControllerConfig::new(vec![5.0; n], 1e-2, 1.0, sm, sx).unwrap();
    let family = TrajFamily::centered(&init, 1.0);
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let bundle = build_bundle(
        model,
        &init,
        &family,
        &grid,
        step,
        &cfg,
        &ReachConfig::default(),
        &model.inertia,
        &model.interval_params(),
    )
    .unwrap();
    BundleFixture {
        init,
        family,
        grid,
        bundle,
        cfg,
    }
}

/// Shared sampling loop over a reach-set bundle: draws a segment time, a
/// trajectory parameter, and a position error inside the tracking tube,
/// reconstructs the realized configuration, and hands it to `check`.
fn for_each_realization(
    model: &RobotModel,
    samples: usize,
    seed: u64,
    mut check: impl FnMut(&BundleFixture, &[(IndetId, f64)], &[f64], &mut ChaCha8Rng, &mut CheckReport),
    rep: &mut CheckReport,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_q;
    let refresh = (samples / (2 * n)).max(1);
    let mut fixture: Option<BundleFixture> = None;
    let mut draw = 0usize;
    while rep.samples < samples {
        if draw % refresh == 0 {
            let step = (draw / refresh) % 8;
            fixture = Some(random_bundle(model, &mut rng, step));
        }
        draw += 1;
        let fx = fixture.as_ref().unwrap();
        let ub = fx.cfg.uniform_bounds();
        let st: f64 = rng.gen_range(-1.0..1.0);
        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig_e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut assign = vec![(IndetId::Time(fx.bundle.step as u32), st)];
        for j in 0..n {
            assign.push((IndetId::Param(j as u32), k[j]));
            assign.push((IndetId::ErrPos(j as u32), sig_e[j]));
        }
        let traj = bernstein_coeffs(&fx.init, &k, &fx.family).unwrap();
        let (q_d, _, _) = traj.eval(fx.grid.realize(fx.bundle.step, st)).unwrap();
        let q: Vec<f64> = (0..n).map(|j| q_d[j] - ub.eps_p[j] * sig_e[j]).collect();
        check(fx, &assign, &q, &mut rng, rep);
    }
}

/// Realized forward-kinematics frame origins land inside the sliced frame
/// enclosures.
pub fn pzfk_containment(model: &RobotModel, samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("pzfk");
    let n = model.n_q;
    for_each_realization(
        model,
        samples,
        seed,
        |fx, assign, q, _, rep| {
            let real = model.fk(q);
            for j in 0..n {
                let sliced = fx.bundle.frames[j].1.slice(assign).unwrap();
                let (lo, hi) = sliced.bounds();
                for d in 0..3 {
                    rep.check_in(real[j].1[d], lo[d], hi[d], 1e-9);
                }
            }
        },
        &mut rep,
    );
    rep
}

/// Random points of every realized link volume land inside the sliced
/// forward-occupancy enclosures.
pub fn pzfo_containment(model: &RobotModel, samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("pzfo");
    let n = model.n_q;
    for_each_realization(
        model,
        samples,
        seed,
        |fx, assign, q, rng, rep| {
            let occ = model.forward_occupancy(q);
            for j in 0..n {
                let vol = &occ[j];
                let mut p = vol.center_v();
                for g in vol.generators_v() {
                    p += rng.gen_range(-1.0..1.0) * g;
                }
                let sliced = fx.bundle.fo[j].slice(assign).unwrap();
                let (lo, hi) = sliced.bounds();
                for d in 0..3 {
                    rep.check_in(p[d], lo[d], hi[d], 1e-9);
                }
            }
        },
        &mut rep,
    );
    rep
}

/// Controls issued by the robust controller at states inside the tracking
/// guarantee lie inside the sliced input reachable set. The controller
/// consumes the set's own disturbance bound, exactly as executions driven
/// by a plan do.
pub fn input_set_containment(model: &RobotModel, samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("input-set");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_q;
    let nominal = model.inertia.clone();
    let boxed = model.interval_params();
    let refresh = (samples / (2 * n)).max(1);
    let mut fixture: Option<BundleFixture> = None;
    let mut draw = 0usize;
    while rep.samples < samples {
        if draw % refresh == 0 {
            let step = (draw / refresh) % 8;
            fixture = Some(random_bundle(model, &mut rng, step));
        }
        draw += 1;
        let fx = fixture.as_ref().unwrap();
        let ub = fx.cfg.uniform_bounds();
        let st_t: f64 = rng.gen_range(-1.0..1.0);
        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig_e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig_v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // reject draws outside the ||r|| <= eps ball the guarantee covers
        let r: Vec<f64> = (0..n)
            .map(|j| ub.eps_v * sig_v[j] + fx.cfg.k_r[j] * ub.eps_p[j] * sig_e[j])
            .collect();
        if r.iter().map(|x| x * x).sum::<f64>().sqrt() > ub.eps {
            continue;
        }
        let t = fx.grid.realize(fx.bundle.step, st_t);
        let traj = bernstein_coeffs(&fx.init, &k, &fx.family).unwrap();
        let (q_d, qd_d, qdd_d) = traj.eval(t).unwrap();
        let state = TotalFeedbackState {
            q: (0..n).map(|j| q_d[j] - ub.eps_p[j] * sig_e[j]).collect(),
            qd: (0..n).map(|j| qd_d[j] - ub.eps_v * sig_v[j]).collect(),
            q_d,
            qd_d,
            qdd_d,
        };
        let dec = robust_input_with_bound(
            model,
            &state,
            &fx.cfg,
            &nominal,
            &boxed,
            fx.bundle.input.w_m.clone(),
        );
        let assign: Vec<(IndetId, f64)> = (0..n)
            .map(|j| (IndetId::Param(j as u32), k[j]))
            .collect();
        for j in 0..n {
            let b = fx.bundle.input.u[j].slice(&assign).unwrap().bounds_scalar();
            rep.check_in(dec.u[j], b.lo(), b.hi(), 1e-9 * (1.0 + dec.u[j].abs()));
        }
    }
    rep
}

/// Analytic constraint gradients against central finite differences over
/// random obstacle layouts, initial conditions, and trajectory parameters.
/// Comparisons whose stencil straddles an active-face or absolute-value
/// switch are skipped; away from those ties the relative error must stay
/// within 1e-5.
pub fn constraint_gradients(model: &RobotModel, cases: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("constraint-gradients");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_q;
    let (sm, sx) = model.eigen_bounds(2000, 7, 0.05);
    let cfg = ControllerConfig::new(vec![5.0; n], 1e-2, 1.0, sm, sx).unwrap();
    let boxed = model.interval_params();
    let refresh = (cases / 4).max(1);
    let mut bundles: Vec<ReachSetBundle> = Vec::new();
    let h = 1e-6;
    for case in 0..cases {
        if case % refresh == 0 {
            let init = InitialCondition {
                q: (0..n).map(|_| rng.gen_range(-0.6..0.6)).collect(),
                qd: (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
                qdd: vec![0.0; n],
            };
            let family = TrajFamily::centered(&init, 1.0);
            let grid = TimeGrid::new(1.0, 4).unwrap();
            bundles = (0..4)
                .map(|i| {
                    build_bundle(
                        model,
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
        }
        let center = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-0.3..0.3),
        ];
        let half = [
            rng.gen_range(0.1..0.3),
            rng.gen_range(0.1..0.3),
            rng.gen_range(0.1..0.3),
        ];
        let obs = Obstacle::from_box(center, half).unwrap();
        let set = ConstraintSet::build(model, &bundles, &[obs]).unwrap();
        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect();
        for c in &set.items {
            let (v0, g) = c.eval_grad(&k).unwrap();
            let mut fd = vec![0.0; n];
            for j in 0..n {
                let mut kp = k.clone();
                let mut km = k.clone();
                kp[j] += h;
                km[j] -= h;
                fd[j] = (c.eval(&kp).unwrap() - c.eval(&km).unwrap()) / (2.0 * h);
            }
            let scale = 1.0 + v0.abs() + g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            // one-sided derivatives genuinely differ across a switch inside
            // the stencil; skip those comparisons
            if (0..n).any(|j| (fd[j] - g[j]).abs() > 1e-3 * scale) {
                continue;
            }
            for j in 0..n {
                rep.samples += 1;
                let err = (fd[j] - g[j]).abs() / scale;
                rep.worst = rep.worst.max(err);
                if err > 1e-5 {
                    rep.violations += 1;
                }
            }
        }
    }
    rep
}

/// Runs every suite at the given sample count (`cases` obstacle layouts for
/// the gradient suite) with seeds derived from `seed`.
pub fn run_all(model: &RobotModel, samples: usize, cases: usize, seed: u64) -> Vec<CheckReport> {
    vec![
        interval_ops(samples, seed),
        pz_ops(samples, seed.wrapping_add(1)),
        taylor_trig(samples, seed.wrapping_add(2)),
        irnea_containment(model, samples, seed.wrapping_add(3)),
        pzrnea_containment(model, samples, seed.wrapping_add(4)),
        pzfk_containment(model, samples, seed.wrapping_add(5)),
        pzfo_containment(model, samples, seed.wrapping_add(6)),
        input_set_containment(model, samples, seed.wrapping_add(7)),
        constraint_gradients(model, cases, seed.wrapping_add(8)),
    ]
}

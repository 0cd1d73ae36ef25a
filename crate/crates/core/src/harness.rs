//! Scene files, random scene generation, batch experiment runs, and
//! plot-ready artifact export.
//!
//! A scene is the on-disk unit of an experiment: a robot file reference,
//! box-shaped obstacles, start and goal configurations, the seed that fixes
//! the episode's ground-truth parameter draw, and the planning timing. Scene
//! serialization is canonical (fixed field order, one trailing newline), so
//! a fixed generator seed reproduces the file byte for byte.
//!
//! Batch metrics split into two artifacts on purpose: `metrics.csv` holds
//! only seed-determined columns and must be identical across reruns, while
//! wall-clock planning times go to `timings.csv`, which is allowed to vary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{zonotope_separated, ConstraintError, Obstacle};
use crate::controller::{ControlError, ControllerConfig};
use crate::planner::{
    fo_bound_boxes, receding_horizon, safety_audit, AuditConfig, AuditReport, EpisodeConfig,
    EpisodeLog, PlanError, PlanningProblem,
};
use crate::reachsets::ReachConfig;
use crate::robot::{ModelError, RobotModel, Zonotope3};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("scene parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Obstacle(#[from] ConstraintError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("scene generation: {0}")]
    Generation(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// Planning timing stored with a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTiming {
    pub t_p: f64,
    pub t_f: f64,
    pub n_t: usize,
}

/// One obstacle as stored on disk: an axis-aligned box (`half_widths`) or a
/// general zonotope (`generators`), exactly one of the two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObstacle {
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<[f64; 3]>>,
}

impl SceneObstacle {
    pub fn boxed(center: [f64; 3], half_widths: [f64; 3]) -> Self {
        Self {
            center,
            half_widths: Some(half_widths),
            generators: None,
        }
    }

    pub fn to_obstacle(&self) -> Result<Obstacle, HarnessError> {
        match (&self.half_widths, &self.generators) {
            (Some(hw), None) => Ok(Obstacle::from_box(self.center, *hw)?),
            (None, Some(gens)) => Ok(Obstacle::new(Zonotope3 {
                center: self.center,
                generators: gens.clone(),
            })?),
            _ => Err(HarnessError::Invalid(
                "obstacle needs exactly one of half_widths or generators".into(),
            )),
        }
    }
}

/// A planning scene as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Robot model path; relative paths resolve against the scene file's
    /// directory.
    pub robot_file: String,
    pub obstacles: Vec<SceneObstacle>,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    /// Seed of the episode's ground-truth inertial parameter draw.
    pub seed: u64,
    pub timing: SceneTiming,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Canonical serialization; identical inputs give identical bytes.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        Ok(fs::write(path, self.to_json_string())?)
    }

    /// Robot file path, resolved against the scene file's directory when the
    /// stored path is relative and the scene's location is known.
    pub fn resolve_robot(&self, scene_path: Option<&Path>) -> PathBuf {
        let raw = Path::new(&self.robot_file);
        match scene_path.and_then(Path::parent) {
            Some(dir) if raw.is_relative() => dir.join(raw),
            _ => raw.to_path_buf(),
        }
    }

    pub fn obstacles(&self) -> Result<Vec<Obstacle>, HarnessError> {
        self.obstacles.iter().map(|o| o.to_obstacle()).collect()
    }

    /// Builds and validates the planning problem this scene describes.
    pub fn to_problem(
        &self,
        model: RobotModel,
        ctrl: ControllerConfig,
        reach: ReachConfig,
    ) -> Result<PlanningProblem, HarnessError> {
        let problem = PlanningProblem {
            model,
            obstacles: self.obstacles()?,
            q_start: self.q_start.clone(),
            q_goal: self.q_goal.clone(),
            t_p: self.timing.t_p,
            t_f: self.timing.t_f,
            n_t: self.timing.n_t,
            ctrl,
            reach,
        };
        problem.validate()?;
        Ok(problem)
    }
}

/// Controller configuration used by every harness entry point: unit barrier
/// slope, K_r = 5 I, and mass-matrix eigenvalue bounds estimated from the
/// model's own uncertainty set. v_m sets the tracking tube the reach sets
/// must buffer; 1e-4 keeps the position buffer around 0.02 rad on the desk
/// fixtures.
pub fn default_controller(model: &RobotModel) -> Result<ControllerConfig, HarnessError> {
    let (sigma_min, sigma_max) = model.eigen_bounds(2000, 7, 0.05);
    Ok(ControllerConfig::new(
        vec![5.0; model.n_q],
        1e-4,
        1.0,
        sigma_min,
        sigma_max,
    )?)
}

/// Random scene generation settings, sized for the desk-scale fixtures.
#[derive(Clone, Debug)]
pub struct SceneGenConfig {
    pub n_obstacles: usize,
    /// Axis-aligned region obstacle centers are drawn from.
    pub bounds: ([f64; 3], [f64; 3]),
    /// Full obstacle side length range, per axis.
    pub side_range: (f64, f64),
    /// Obstacles must keep at least this clearance from the robot base.
    pub base_keepout: f64,
    /// Start and goal must stay separated from every obstacle even with link
    /// volumes inflated by this much, leaving room for the tracking tube.
    pub clearance: f64,
    /// Sup-norm joint travel between start and goal.
    pub travel: (f64, f64),
    /// Candidate draws per stage before generation fails.
    pub max_rejects: usize,
    pub timing: SceneTiming,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            n_obstacles: 3,
            bounds: ([-0.9, -0.9, -0.05], [0.9, 0.9, 0.05]),
            side_range: (0.1, 0.3),
            base_keepout: 0.15,
            clearance: 0.1,
            travel: (0.3, 0.8),
            max_rejects: 10_000,
            timing: SceneTiming {
                t_p: 1.0,
                t_f: 2.0,
                n_t: 4,
            },
        }
    }
}

/// The link volumes at `q`, inflated by an axis-aligned margin, certifiably
/// separated from every obstacle.
fn pose_is_clear(model: &RobotModel, q: &[f64], obstacles: &[Obstacle], margin: f64) -> bool {
    model.forward_occupancy(q).iter().all(|vol| {
        let mut v = vol.clone();
        for d in 0..3 {
            let mut g = [0.0; 3];
            g[d] = margin;
            v.generators.push(g);
        }
        obstacles.iter().all(|obs| zonotope_separated(&v, obs))
    })
}

/// Generates a random scene: box obstacles drawn inside `cfg.bounds`, then
/// rest-to-rest start and goal configurations rejection-sampled until both
/// are clear of every obstacle with margin. The same seed reproduces the
/// scene exactly.
pub fn gen_scene(
    model: &RobotModel,
    robot_file: &str,
    cfg: &SceneGenConfig,
    seed: u64,
) -> Result<Scene, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = |stage: &str| HarnessError::Generation(format!("{stage} rejection budget exhausted"));

    let mut stored = Vec::with_capacity(cfg.n_obstacles);
    let mut obstacles = Vec::with_capacity(cfg.n_obstacles);
    let mut draws = 0;
    while obstacles.len() < cfg.n_obstacles {
        if draws >= cfg.max_rejects {
            return Err(budget("obstacle"));
        }
        draws += 1;
        let mut center = [0.0; 3];
        let mut half = [0.0; 3];
        for d in 0..3 {
            center[d] = rng.gen_range(cfg.bounds.0[d]..=cfg.bounds.1[d]);
            half[d] = rng.gen_range(cfg.side_range.0..=cfg.side_range.1) / 2.0;
        }
        let obs = Obstacle::from_box(center, half)?;
        // the mount itself must stay clear or no pose is ever feasible
        if obs.margin(&nalgebra::Vector3::zeros()) <= cfg.base_keepout {
            continue;
        }
        stored.push(SceneObstacle::boxed(center, half));
        obstacles.push(obs);
    }

    let draw_pose = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        model
            .joints
            .iter()
            .map(|j| {
                let margin = 0.05 * (j.q_lim[1] - j.q_lim[0]);
                rng.gen_range(j.q_lim[0] + margin..=j.q_lim[1] - margin)
            })
            .collect()
    };

    let mut q_start = None;
    for _ in 0..cfg.max_rejects {
        let q = draw_pose(&mut rng);
        if pose_is_clear(model, &q, &obstacles, cfg.clearance) {
            q_start = Some(q);
            break;
        }
    }
    let q_start = q_start.ok_or_else(|| budget("start pose"))?;

    let mut q_goal = None;
    for _ in 0..cfg.max_rejects {
        let q: Vec<f64> = q_start
            .iter()
            .map(|s| s + rng.gen_range(-cfg.travel.1..=cfg.travel.1))
            .collect();
        let travel = q
            .iter()
            .zip(&q_start)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let in_limits = q
            .iter()
            .zip(&model.joints)
            .all(|(v, j)| *v >= j.q_lim[0] && *v <= j.q_lim[1]);
        if travel >= cfg.travel.0 && in_limits && pose_is_clear(model, &q, &obstacles, cfg.clearance)
        {
            q_goal = Some(q);
            break;
        }
    }
    let q_goal = q_goal.ok_or_else(|| budget("goal pose"))?;

    // independent re-check of what the sampler accepted: every sampled
    // volume point of both poses sits strictly outside every obstacle
    for q in [&q_start, &q_goal] {
        for vol in model.forward_occupancy(q) {
            for p in vol.sample_points(64) {
                if obstacles.iter().any(|obs| obs.contains(&p)) {
                    return Err(HarnessError::Generation(
                        "self-check failed: accepted pose touches an obstacle".into(),
                    ));
                }
            }
        }
    }

    Ok(Scene {
        robot_file: robot_file.to_string(),
        obstacles: stored,
        q_start,
        q_goal,
        seed,
        timing: cfg.timing.clone(),
    })
}

/// Per-episode results, one row of the batch metrics table.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeMetrics {
    pub scene: String,
    pub goal_reached: bool,
    /// The audit found a collision. Must be false in every accepted run.
    pub crashed: bool,
    pub iterations: usize,
    /// Wall-clock planning time per horizon (excluded from the deterministic
    /// metrics CSV).
    pub mean_plan_s: f64,
    pub max_plan_s: f64,
    /// Smallest audited obstacle clearance; `None` for obstacle-free scenes.
    pub min_clearance: Option<f64>,
}

/// One scene ready to run: the scene plus its loaded robot.
#[derive(Clone, Debug)]
pub struct BatchJob {
    pub name: String,
    pub scene: Scene,
    pub model: RobotModel,
}

impl BatchJob {
    /// Loads the scene and its robot model from a scene file.
    pub fn load(scene_path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = scene_path.as_ref();
        let scene = Scene::load(path)?;
        let model = RobotModel::load(scene.resolve_robot(Some(path)))?;
        let name = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        Ok(Self { name, scene, model })
    }
}

#[derive(Clone, Debug)]
pub struct BatchConfig {
    /// Episode settings; the seed is overridden by each scene's own seed.
    pub episode: EpisodeConfig,
    pub reach: ReachConfig,
    pub audit: AuditConfig,
    /// Episodes run concurrently at most this many at a time. Solves race a
    /// wall-clock deadline, so the default of one keeps their timing honest;
    /// raise it only with spare cores.
    pub parallelism: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            reach: ReachConfig::default(),
            audit: AuditConfig::default(),
            parallelism: 1,
        }
    }
}

/// Everything a batch keeps per scene.
#[derive(Clone, Debug, Serialize)]
pub struct BatchReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub audits: Vec<AuditReport>,
}

impl BatchReport {
    pub fn goals_reached(&self) -> usize {
        self.episodes.iter().filter(|m| m.goal_reached).count()
    }

    pub fn crashes(&self) -> usize {
        self.episodes.iter().filter(|m| m.crashed).count()
    }

    /// Every audit came back with zero violations of any kind.
    pub fn all_safe(&self) -> bool {
        self.audits.iter().all(AuditReport::is_clean)
    }

    /// Seed-determined columns only; identical across reruns of the same
    /// batch.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("scene,goal_reached,crashed,iterations,min_clearance\n");
        for m in &self.episodes {
            let clearance = m.min_clearance.map_or(String::new(), |c| format!("{c:.6}"));
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.scene, m.goal_reached, m.crashed, m.iterations, clearance
            ));
        }
        out
    }

    /// Wall-clock planning times; varies run to run by nature.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("scene,mean_plan_s,max_plan_s\n");
        for m in &self.episodes {
            out.push_str(&format!(
                "{},{:.4},{:.4}\n",
                m.scene, m.mean_plan_s, m.max_plan_s
            ));
        }
        out
    }

    /// Writes `metrics.csv`, `timings.csv`, and `metrics.json`.
    pub fn write_artifacts(&self, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(out_dir)?;
        let metrics = out_dir.join("metrics.csv");
        let timings = out_dir.join("timings.csv");
        let json = out_dir.join("metrics.json");
        fs::write(&metrics, self.metrics_csv())?;
        fs::write(&timings, self.timings_csv())?;
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(vec![metrics, timings, json])
    }
}

/// Runs one scene end to end: default controller, receding-horizon episode
/// with the scene's seed, then the independent safety audit.
pub fn run_scene(
    job: &BatchJob,
    cfg: &BatchConfig,
) -> Result<(EpisodeMetrics, AuditReport, EpisodeLog), HarnessError> {
    let ctrl = default_controller(&job.model)?;
    let problem = job
        .scene
        .to_problem(job.model.clone(), ctrl, cfg.reach.clone())?;
    let episode_cfg = EpisodeConfig {
        seed: job.scene.seed,
        ..cfg.episode.clone()
    };
    let log = receding_horizon(&problem, &episode_cfg)?;
    let audit = safety_audit(
        &problem.model,
        &log,
        &problem.obstacles,
        &problem.ctrl,
        &cfg.audit,
    );

    let times: Vec<f64> = log
        .iterations
        .iter()
        .map(|it| it.plan.solve_seconds)
        .chain(log.failed_plan.iter().map(|p| p.solve_seconds))
        .collect();
    let max_plan_s = times.iter().copied().fold(0.0, f64::max);
    let mean_plan_s = if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    let metrics = EpisodeMetrics {
        scene: job.name.clone(),
        goal_reached: log.reached_goal,
        crashed: audit.collision_violations > 0,
        iterations: log.iterations.len(),
        mean_plan_s,
        max_plan_s,
        min_clearance: (!problem.obstacles.is_empty()).then_some(audit.min_clearance),
    };
    Ok((metrics, audit, log))
}

/// Runs every scene in a worker pool and aggregates the results in input
/// order. Callers decide how to react to violations; [`BatchReport::all_safe`]
/// is the gate.
///
/// The pool is plain OS threads, not the shared data-parallel pool: an
/// episode blocks its thread while its own solver and simulator run, and
/// parking a pool worker that way would starve the reach-set parallelism
/// the solver itself relies on.
pub fn run_batch(jobs: &[BatchJob], cfg: &BatchConfig) -> Result<BatchReport, HarnessError> {
    let workers = cfg.parallelism.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<(EpisodeMetrics, AuditReport), HarnessError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = run_scene(job, cfg).map(|(m, a, _)| (m, a));
                *slots[i].lock().expect("batch slot") = Some(result);
            });
        }
    });
    let mut episodes = Vec::with_capacity(jobs.len());
    let mut audits = Vec::with_capacity(jobs.len());
    for slot in slots {
        let (m, a) = slot.into_inner().expect("batch slot").expect("worker filled slot")?;
        episodes.push(m);
        audits.push(a);
    }
    Ok(BatchReport { episodes, audits })
}

/// Writes the plot-ready CSV artifacts for one episode:
///
/// - `tracking.csv`: `t, e_1.., de_1.., r_norm, eps`, one row per simulation
///   step; `r_norm <= eps` in every row of an audited episode.
/// - `inputs.csv`: `t, u_1.., u_lo_1.., u_hi_1..`, applied torques against
///   the model's limits.
/// - `fo_bounds.csv`: `horizon, step, link, lo_x..hi_z`, the axis-aligned
///   bounds of every link occupancy set at the executed parameter, `n_t`
///   steps per horizon.
pub fn export_plots(
    problem: &PlanningProblem,
    log: &EpisodeLog,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let n = problem.model.n_q;
    let eps = problem.ctrl.uniform_bounds().eps;

    let tracking = out_dir.join("tracking.csv");
    let mut w = csv::Writer::from_path(&tracking)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("e_{j}")));
    header.extend((1..=n).map(|j| format!("de_{j}")));
    header.push("r_norm".into());
    header.push("eps".into());
    w.write_record(&header)?;
    for st in &log.sim.steps {
        let mut row = vec![st.t.to_string()];
        row.extend(st.e.iter().map(f64::to_string));
        row.extend(st.de.iter().map(f64::to_string));
        row.push(st.r_norm.to_string());
        row.push(eps.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;

    let inputs = out_dir.join("inputs.csv");
    let mut w = csv::Writer::from_path(&inputs)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("u_{j}")));
    header.extend((1..=n).map(|j| format!("u_lo_{j}")));
    header.extend((1..=n).map(|j| format!("u_hi_{j}")));
    w.write_record(&header)?;
    for st in &log.sim.steps {
        let mut row = vec![st.t.to_string()];
        row.extend(st.u.iter().map(f64::to_string));
        row.extend(problem.model.joints.iter().map(|j| j.u_lim[0].to_string()));
        row.extend(problem.model.joints.iter().map(|j| j.u_lim[1].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let fo = out_dir.join("fo_bounds.csv");
    let mut w = csv::Writer::from_path(&fo)?;
    w.write_record([
        "horizon", "step", "link", "lo_x", "lo_y", "lo_z", "hi_x", "hi_y", "hi_z",
    ])?;
    for it in &log.iterations {
        let boxes = fo_bound_boxes(problem, &it.init, &it.k)?;
        for (step, links) in boxes.iter().enumerate() {
            for (link, (lo, hi)) in links.iter().enumerate() {
                let mut row = vec![it.index.to_string(), step.to_string(), link.to_string()];
                row.extend(lo.iter().map(f64::to_string));
                row.extend(hi.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;

    Ok(vec![tracking, inputs, fo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn two_link() -> RobotModel {
        RobotModel::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../models/two_link.json"
        ))
        .unwrap()
    }

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("reacharm_{tag}_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn fixture_scene(goal: Vec<f64>, obstacles: Vec<SceneObstacle>, seed: u64) -> Scene {
        Scene {
            robot_file: "two_link.json".into(),
            obstacles,
            q_start: vec![0.3, -0.4],
            q_goal: goal,
            seed,
            timing: SceneTiming {
                t_p: 1.0,
                t_f: 2.0,
                n_t: 4,
            },
        }
    }

    #[test]
    fn scene_schema_roundtrips_both_obstacle_forms() {
        let text = r#"{
            "robot_file": "two_link.json",
            "obstacles": [
                {"center": [0.5, -0.5, 0.0], "half_widths": [0.1, 0.2, 0.3]},
                {"center": [0.0, 0.8, 0.0],
                 "generators": [[0.1, 0.0, 0.0], [0.05, 0.1, 0.0], [0.0, 0.0, 0.1]]}
            ],
            "q_start": [0.3, -0.4],
            "q_goal": [0.6, -0.6],
            "seed": 7,
            "timing": {"t_p": 1.0, "t_f": 2.0, "n_t": 4}
        }"#;
        let scene = Scene::from_json(text).unwrap();
        assert_eq!(scene.obstacles.len(), 2);
        let obs = scene.obstacles().unwrap();
        assert_eq!(obs[0].zonotope.generators.len(), 3);
        assert!(obs[1].halfspaces().0.len() >= 6);

        let reparsed = Scene::from_json(&scene.to_json_string()).unwrap();
        assert_eq!(reparsed, scene);
    }

    #[test]
    fn obstacle_needs_exactly_one_form() {
        let both = SceneObstacle {
            center: [0.0; 3],
            half_widths: Some([0.1; 3]),
            generators: Some(vec![[0.1, 0.0, 0.0]]),
        };
        assert!(matches!(both.to_obstacle(), Err(HarnessError::Invalid(_))));
        let neither = SceneObstacle {
            center: [0.0; 3],
            half_widths: None,
            generators: None,
        };
        assert!(matches!(neither.to_obstacle(), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn generated_scenes_are_reproducible_and_clear() {
        let model = two_link();
        let cfg = SceneGenConfig::default();
        let a = gen_scene(&model, "two_link.json", &cfg, 42).unwrap();
        let b = gen_scene(&model, "two_link.json", &cfg, 42).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());

        let c = gen_scene(&model, "two_link.json", &cfg, 43).unwrap();
        assert_ne!(a.to_json_string(), c.to_json_string());

        assert_eq!(a.obstacles.len(), cfg.n_obstacles);
        let obstacles = a.obstacles().unwrap();
        for q in [&a.q_start, &a.q_goal] {
            for vol in model.forward_occupancy(q) {
                for p in vol.sample_points(64) {
                    for obs in &obstacles {
                        assert!(obs.margin(&p) > 0.0, "accepted pose touches an obstacle");
                    }
                }
            }
        }
        let travel = a
            .q_start
            .iter()
            .zip(&a.q_goal)
            .map(|(s, g)| (s - g).abs())
            .fold(0.0f64, f64::max);
        assert!(travel >= cfg.travel.0 && travel <= cfg.travel.1);
    }

    #[test]
    fn empty_scene_is_valid_and_impossible_margins_fail() {
        let model = two_link();
        let cfg = SceneGenConfig {
            n_obstacles: 0,
            ..Default::default()
        };
        let scene = gen_scene(&model, "two_link.json", &cfg, 1).unwrap();
        assert!(scene.obstacles.is_empty());
        let ctrl = default_controller(&model).unwrap();
        scene
            .to_problem(model.clone(), ctrl, ReachConfig::default())
            .unwrap();

        // an unreachable clearance exhausts the start-pose budget
        let impossible = SceneGenConfig {
            n_obstacles: 1,
            clearance: 50.0,
            max_rejects: 100,
            ..Default::default()
        };
        assert!(matches!(
            gen_scene(&model, "two_link.json", &impossible, 1),
            Err(HarnessError::Generation(_))
        ));
    }

    #[test]
    fn batch_reaches_goals_with_identical_metrics_across_reruns() {
        let model = two_link();
        let jobs = vec![
            BatchJob {
                name: "free".into(),
                scene: fixture_scene(vec![0.6, -0.6], vec![], 7),
                model: model.clone(),
            },
            BatchJob {
                name: "slab".into(),
                scene: fixture_scene(
                    vec![0.55, -0.55],
                    vec![SceneObstacle::boxed([0.5, -0.5, 0.0], [0.3; 3])],
                    5,
                ),
                model: model.clone(),
            },
        ];
        let cfg = BatchConfig::default();
        let report = run_batch(&jobs, &cfg).unwrap();
        assert_eq!(report.goals_reached(), 2);
        assert_eq!(report.crashes(), 0);
        assert!(report.all_safe());
        assert!(report.episodes[0].min_clearance.is_none());
        assert!(report.episodes[1].min_clearance.unwrap() > 0.0);

        let rerun = run_batch(&jobs, &cfg).unwrap();
        assert_eq!(report.metrics_csv(), rerun.metrics_csv());

        let dir = tmp_dir("batch");
        let files = report.write_artifacts(&dir).unwrap();
        assert!(files.iter().all(|f| f.exists()));
        assert_eq!(
            fs::read_to_string(dir.join("metrics.csv")).unwrap(),
            report.metrics_csv()
        );
        assert!(fs::read_to_string(dir.join("timings.csv"))
            .unwrap()
            .starts_with("scene,mean_plan_s,max_plan_s"));
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn exported_plots_match_their_documented_shape() {
        let model = two_link();
        let job = BatchJob {
            name: "short".into(),
            scene: fixture_scene(vec![0.45, -0.5], vec![], 11),
            model,
        };
        let cfg = BatchConfig::default();
        let (metrics, audit, log) = run_scene(&job, &cfg).unwrap();
        assert!(metrics.goal_reached);
        assert!(audit.is_clean());

        let ctrl = default_controller(&job.model).unwrap();
        let problem = job
            .scene
            .to_problem(job.model.clone(), ctrl, cfg.reach.clone())
            .unwrap();
        let dir = tmp_dir("plots");
        let files = export_plots(&problem, &log, &dir).unwrap();
        assert_eq!(files.len(), 3);

        let tracking = fs::read_to_string(&files[0]).unwrap();
        let rows: Vec<&str> = tracking.lines().collect();
        assert_eq!(rows.len(), log.sim.steps.len() + 1);
        let eps = problem.ctrl.uniform_bounds().eps;
        for row in &rows[1..] {
            let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
            let r_norm = cols[cols.len() - 2];
            assert!(r_norm <= eps + 1e-9);
        }

        let inputs = fs::read_to_string(&files[1]).unwrap();
        assert_eq!(inputs.lines().count(), log.sim.steps.len() + 1);

        let fo = fs::read_to_string(&files[2]).unwrap();
        let mut steps_per_horizon: std::collections::HashMap<usize, HashSet<usize>> =
            std::collections::HashMap::new();
        for row in fo.lines().skip(1) {
            let cols: Vec<&str> = row.split(',').collect();
            steps_per_horizon
                .entry(cols[0].parse().unwrap())
                .or_default()
                .insert(cols[1].parse().unwrap());
        }
        assert_eq!(steps_per_horizon.len(), log.iterations.len());
        for steps in steps_per_horizon.values() {
            assert_eq!(steps.len(), problem.n_t);
        }
        fs::remove_dir_all(dir).ok();
    }
}

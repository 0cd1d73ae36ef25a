//! Reachability-certified planning and robust control for serial manipulators.
//!
//! The crate builds, end to end, the pipeline needed to move a serial arm with
//! interval-uncertain inertial parameters through a cluttered workspace with
//! formal guarantees:
//!
//! - [`interval`]: closed interval arithmetic over `f64`.
//! - [`polyzono`]: polynomial zonotopes (sets parameterized by polynomial maps
//!   of indeterminates on `[-1, 1]`), the set representation every reachable
//!   set here is written in.
//! - [`robot`]: kinematic chains, link volumes, and interval inertial models.
//! - [`trajectory`]: parameterized desired trajectories with braking tails,
//!   their time partition, and tracking-error buffering.
//! - [`dynamics`]: inverse dynamics in real, interval, and polynomial-zonotope
//!   arithmetic, sharing one recursion.
//! - [`controller`]: a robust passivity-based tracking controller with a
//!   provable uniform bound on the tracking error, plus a closed-loop
//!   simulator and a baseline robust controller for comparison.
//! - [`reachsets`]: forward occupancy and input reachable sets over the
//!   trajectory family.
//! - [`constraints`]: differentiable safety constraints (joint limits,
//!   obstacle avoidance, torque limits) evaluated on reachable sets.
//! - [`planner`]: a receding-horizon trajectory optimizer with a hard
//!   per-iteration wall-clock budget and a guaranteed braking fallback.
//! - [`harness`]: scene generation, batch experiments, and artifact export.
//! - [`verify`]: sampling verification suites for every enclosure and
//!   gradient, runnable at arbitrary sample counts.

pub mod constraints;
pub mod controller;
pub mod dynamics;
pub mod harness;
pub mod interval;
pub mod planner;
pub mod polyzono;
pub mod reachsets;
pub mod robot;
pub mod trajectory;
pub mod verify;

pub use interval::{Interval, IntervalError, IntervalMatrix};
pub use polyzono::{IndetId, PolyZonotope, PzError, PzMat};
pub use robot::{ModelError, RobotModel, Zonotope3};

//! Built-in hybrid systems: a dissipative rolling disk between walls (fixed
//! or moving) and a dissipative billiard inside a time-varying circular wall.
//!
//! Each factory returns a [`ModelBundle`]: the Cartesian hybrid system, its
//! polar counterpart with the cyclic structure declared, chart maps between
//! the two, the documented per-impact momentum update rule, classification
//! probe samplers and symmetry generators.

mod billiard;
mod disk;

pub use billiard::{build_billiard, BilliardParams};
pub use disk::{build_rolling_disk, DiskParams};

use crate::classify::ClassificationProbes;
use crate::error::{Error, Result};
use crate::guard::HybridSystem;
use crate::state::TangentState;
use crate::symmetry::MomentumValue;
use nalgebra::DVector;
use std::sync::Arc;

/// Registered model names for scenario configs.
pub const MODEL_NAMES: [&str; 3] = ["disk_fixed", "disk_moving", "billiard"];

pub type StateMap = Arc<dyn Fn(&TangentState) -> Result<TangentState> + Send + Sync>;
pub type MomentumEval = Arc<dyn Fn(&TangentState) -> DVector<f64> + Send + Sync>;
pub type GeneratorEval = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MomentumUpdate = Arc<dyn Fn(&str, &MomentumValue) -> MomentumValue + Send + Sync>;

/// Everything a scenario needs to run a built-in model in either chart.
#[derive(Clone)]
pub struct ModelBundle {
    pub name: String,
    /// Full model in Cartesian coordinates.
    pub cartesian: HybridSystem,
    /// Full model in polar coordinates, cyclic structure declared.
    pub polar: HybridSystem,
    /// Documented analytic momentum update at impacts (per guard label).
    /// The reduced executor recomputes the update from the impact map; this
    /// rule states the model's expected behaviour on its guard set.
    pub momentum_update: MomentumUpdate,
    /// Momentum map evaluated on Cartesian-chart states.
    pub cartesian_momentum: MomentumEval,
    /// Classification probe samplers for the polar system's guards.
    pub probes: ClassificationProbes,
    /// Symmetry generators on the Cartesian configuration space.
    pub symmetry_generators: Vec<(String, GeneratorEval)>,
    pub to_polar: StateMap,
    pub to_cartesian: StateMap,
}

impl std::fmt::Debug for ModelBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBundle").field("name", &self.name).finish()
    }
}

/// A moving-wall profile: the radius (or height) signal and its derivative,
/// supplied as separate evaluators.
#[derive(Clone)]
pub struct WallMotion {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub fdot: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for WallMotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("WallMotion")
    }
}

impl WallMotion {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fdot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            fdot: Arc::new(fdot),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(move |_| value, |_| 0.0)
    }

    pub fn linear(a: f64, b: f64) -> Self {
        Self::new(move |t| a + b * t, move |_| b)
    }

    /// a - b exp(t / tau); the billiard default is (2, 1, 10).
    pub fn exponential(a: f64, b: f64, tau: f64) -> Self {
        Self::new(
            move |t| a - b * (t / tau).exp(),
            move |t| -b / tau * (t / tau).exp(),
        )
    }
}

/// Positions/velocities between Cartesian (x, y, rest...) and polar
/// (r, theta, rest...) charts; the leading two coordinates rotate, the rest
/// pass through.
pub(crate) fn cart_to_polar_state(s: &TangentState) -> Result<TangentState> {
    let (x, y) = (s.q[0], s.q[1]);
    let r = x.hypot(y);
    if r < 1e-9 {
        return Err(Error::ChartSingularity { r });
    }
    let theta = y.atan2(x);
    let (vx, vy) = (s.v[0], s.v[1]);
    let rdot = (x * vx + y * vy) / r;
    let thetadot = (x * vy - y * vx) / (r * r);
    let mut q = s.q.clone();
    let mut v = s.v.clone();
    q[0] = r;
    q[1] = theta;
    v[0] = rdot;
    v[1] = thetadot;
    TangentState::new(s.t, q, v)
}

pub(crate) fn polar_to_cart_state(s: &TangentState) -> Result<TangentState> {
    let (r, theta) = (s.q[0], s.q[1]);
    if r < 1e-9 {
        return Err(Error::ChartSingularity { r });
    }
    let (st, ct) = theta.sin_cos();
    let (rdot, thetadot) = (s.v[0], s.v[1]);
    let mut q = s.q.clone();
    let mut v = s.v.clone();
    q[0] = r * ct;
    q[1] = r * st;
    v[0] = rdot * ct - r * thetadot * st;
    v[1] = rdot * st + r * thetadot * ct;
    TangentState::new(s.t, q, v)
}

/// Builds a registered model by name from its parameter set.
pub fn build_by_name(
    name: &str,
    disk: &DiskParams,
    billiard: &BilliardParams,
) -> Result<ModelBundle> {
    match name {
        "disk_fixed" => {
            let mut p = disk.clone();
            p.wall_motion = None;
            build_rolling_disk(&p)
        }
        "disk_moving" => {
            if disk.wall_motion.is_none() {
                return Err(Error::InvalidParams(
                    "disk_moving requires a wall motion profile".into(),
                ));
            }
            build_rolling_disk(disk)
        }
        "billiard" => build_billiard(billiard),
        other => Err(Error::InvalidParams(format!(
            "unknown model '{}'; registered models: {}",
            other,
            MODEL_NAMES.join(", ")
        ))),
    }
}

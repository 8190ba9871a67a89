//! Homogeneous disk of radius R and gyration radius k moving in a vertical
//! plane between two rough walls, with a nonlinear dissipative force. On
//! wall contact the disk rolls without sliding; the normal velocity reverses
//! scaled by the restitution coefficient.
//!
//! Cartesian coordinates (x, y, vartheta): center position and rotation
//! angle, mass matrix diag(m, m, m k^2), zero potential, force covector
//!   F_x = -2c (vx x y - vy x^2),  F_y = 2c (vy x y - vx y^2),  F_vartheta = 0.
//! Impact map
//!   (vx, vy, w) -> ((R^2 vx + k^2 R w)/(k^2+R^2), -e vy, (R vx + k^2 w)/(k^2+R^2)).
//! Walls sit at height 0 and alpha R (or f(t) in the moving variant), so the
//! center-height guards are y = R and y = alpha R - R (resp. f(t) - R).
//!
//! Polar coordinates (r, theta, vartheta) make theta and vartheta cyclic with
//! momentum map (m r^2 thetadot, m k^2 varthetadot). On the printed guard set
//! the impacts flip the first component and keep the second:
//! (mu1, mu2) -> (-mu1, mu2).

use super::{
    cart_to_polar_state, polar_to_cart_state, GeneratorEval, ModelBundle, WallMotion,
};
use crate::classify::{ClassificationProbes, GuardProbes};
use crate::error::{Error, Result};
use crate::guard::{Guard, HybridSystem, ImpactLaw, Transition};
use crate::mech::{AnalyticDerivatives, MechanicalSystem};
use crate::state::TangentState;
use crate::symmetry::{CyclicStructure, MomentumValue};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::sync::Arc;

/// Parameters of the rolling-disk model.
#[derive(Debug, Clone)]
pub struct DiskParams {
    pub m: f64,
    /// Disk radius R.
    pub radius: f64,
    /// Gyration radius k.
    pub gyration: f64,
    /// Dissipation coefficient c > 0.
    pub dissipation: f64,
    /// Restitution coefficient e in [0, 1].
    pub restitution: f64,
    /// Wall spacing factor: fixed walls at heights 0 and alpha R, alpha > 1.
    pub alpha: f64,
    /// Moving upper wall y = f(t); when present the impact map is the fixed
    /// one with e = 1, exactly as the map is printed for the moving case.
    pub wall_motion: Option<WallMotion>,
    /// Strict mode: the guard additionally requires |vx - R w| <= band
    /// (the rolling condition as part of the switching surface). With None
    /// the guard fires on wall contact with inward normal velocity and the
    /// map is applied regardless.
    pub rolling_band: Option<f64>,
}

impl Default for DiskParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            radius: 1.0,
            gyration: std::f64::consts::FRAC_1_SQRT_2,
            dissipation: 0.1,
            restitution: 1.0,
            alpha: 3.0,
            wall_motion: None,
            rolling_band: None,
        }
    }
}

impl DiskParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("radius", self.radius),
            ("gyration", self.gyration),
            ("dissipation", self.dissipation),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::InvalidParams(format!(
                "restitution must lie in [0, 1], got {}",
                self.restitution
            )));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        if self.wall_motion.is_some() && self.restitution != 1.0 {
            return Err(Error::InvalidParams(
                "the moving-wall disk uses the printed impact map, which has e = 1".into(),
            ));
        }
        Ok(())
    }

    /// Probes f(t) >= alpha R over the horizon for the moving variant.
    pub fn probe_horizon(&self, t0: f64, t1: f64) -> Result<()> {
        if let Some(w) = &self.wall_motion {
            let floor = self.alpha * self.radius;
            for k in 0..=128 {
                let t = t0 + (t1 - t0) * k as f64 / 128.0;
                let f = (w.f)(t);
                if !(f >= floor) {
                    return Err(Error::InvalidParams(format!(
                        "moving wall violates f(t) >= alpha R at t = {t}: f = {f}, alpha R = {floor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Wraps an approach evaluator with the rolling-band admissibility
/// refinement |vx - R w| <= band.
fn with_rolling_band(
    base: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    vx_of: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    w_of: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    radius: f64,
    band: Option<f64>,
) -> impl Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static {
    move |t, q, v| {
        if let Some(b) = band {
            let slip = vx_of(q, v) - radius * w_of(q, v);
            if slip.abs() > b {
                return 1.0; // inadmissible
            }
        }
        base(t, q, v)
    }
}

fn cartesian_system(p: &DiskParams) -> Result<MechanicalSystem> {
    let (m, k, c) = (p.m, p.gyration, p.dissipation);
    let n = 3;
    let mass_matrix = DMatrix::from_diagonal(&DVector::from_row_slice(&[m, m, m * k * k]));
    let mm = mass_matrix.clone();
    let sys = MechanicalSystem::new(
        n,
        Arc::new(move |_t, _q| mm.clone()),
        Arc::new(|_t, _q| 0.0),
        Arc::new(move |_t, q: &DVector<f64>, v: &DVector<f64>| {
            let (x, y) = (q[0], q[1]);
            let (vx, vy) = (v[0], v[1]);
            DVector::from_row_slice(&[
                -2.0 * c * (vx * x * y - vy * x * x),
                2.0 * c * (vy * x * y - vx * y * y),
                0.0,
            ])
        }),
        vec!["x".into(), "y".into(), "vartheta".into()],
    )?;
    Ok(sys.with_analytic(AnalyticDerivatives {
        mass_dq: Arc::new(move |_t, _q| vec![DMatrix::zeros(3, 3); 3]),
        mass_dt: Arc::new(move |_t, _q| DMatrix::zeros(3, 3)),
        potential_dq: Arc::new(move |_t, _q| DVector::zeros(3)),
    }))
}

fn polar_system(p: &DiskParams) -> Result<MechanicalSystem> {
    let (m, k, c) = (p.m, p.gyration, p.dissipation);
    let sys = MechanicalSystem::new(
        3,
        Arc::new(move |_t, q: &DVector<f64>| {
            let r = q[0];
            DMatrix::from_diagonal(&DVector::from_row_slice(&[m, m * r * r, m * k * k]))
        }),
        Arc::new(|_t, _q| 0.0),
        Arc::new(move |_t, q: &DVector<f64>, v: &DVector<f64>| {
            let r = q[0];
            DVector::from_row_slice(&[2.0 * c * r * r * r * v[1], 0.0, 0.0])
        }),
        vec!["r".into(), "theta".into(), "vartheta".into()],
    )?;
    Ok(sys.with_analytic(AnalyticDerivatives {
        mass_dq: Arc::new(move |_t, q: &DVector<f64>| {
            let mut dr = DMatrix::zeros(3, 3);
            dr[(1, 1)] = 2.0 * m * q[0];
            vec![dr, DMatrix::zeros(3, 3), DMatrix::zeros(3, 3)]
        }),
        mass_dt: Arc::new(move |_t, _q| DMatrix::zeros(3, 3)),
        potential_dq: Arc::new(move |_t, _q| DVector::zeros(3)),
    }))
}

/// The printed impact map in Cartesian velocities.
fn impact_velocities(radius: f64, k: f64, e: f64, vx: f64, vy: f64, w: f64) -> (f64, f64, f64) {
    let denom = k * k + radius * radius;
    (
        (radius * radius * vx + k * k * radius * w) / denom,
        -e * vy,
        (radius * vx + k * k * w) / denom,
    )
}

pub fn build_rolling_disk(p: &DiskParams) -> Result<ModelBundle> {
    p.validate()?;
    let (m, radius, k) = (p.m, p.radius, p.gyration);
    let e = p.restitution;
    let top_fixed = p.alpha * radius - radius;
    let band = p.rolling_band;
    let moving = p.wall_motion.clone();

    // --- Cartesian hybrid system ---------------------------------------
    let cart_sys = cartesian_system(p)?;
    let bottom_guard = Guard::with_approach(
        "bottom_wall",
        Arc::new(move |_t, q: &DVector<f64>| q[1] - radius),
        Arc::new(with_rolling_band(
            |_t, _q, v: &DVector<f64>| v[1],
            |_q, v| v[0],
            |_q, v| v[2],
            radius,
            band,
        )),
        false,
    )
    .with_gradient(Arc::new(|_t, _q| DVector::from_row_slice(&[0.0, 1.0, 0.0])));
    let top_guard = match &moving {
        None => Guard::with_approach(
            "top_wall",
            Arc::new(move |_t, q: &DVector<f64>| top_fixed - q[1]),
            Arc::new(with_rolling_band(
                |_t, _q, v: &DVector<f64>| -v[1],
                |_q, v| v[0],
                |_q, v| v[2],
                radius,
                band,
            )),
            false,
        ),
        Some(w) => {
            let (f, fdot) = (w.f.clone(), w.fdot.clone());
            Guard::with_approach(
                "top_wall",
                Arc::new(move |t, q: &DVector<f64>| (f(t) - radius) - q[1]),
                Arc::new(with_rolling_band(
                    move |t, _q, v: &DVector<f64>| fdot(t) - v[1],
                    |_q, v| v[0],
                    |_q, v| v[2],
                    radius,
                    band,
                )),
                true,
            )
        }
    }
    .with_gradient(Arc::new(|_t, _q| DVector::from_row_slice(&[0.0, -1.0, 0.0])));
    let cart_map = ImpactLaw::Custom {
        map: Arc::new(move |_t, q: &DVector<f64>, v: &DVector<f64>| {
            let (vx, vy, w) = impact_velocities(radius, k, e, v[0], v[1], v[2]);
            (q.clone(), DVector::from_row_slice(&[vx, vy, w]))
        }),
    };
    let cartesian = HybridSystem::new(
        cart_sys,
        vec![
            Transition {
                guard: bottom_guard,
                law: cart_map.clone(),
            },
            Transition {
                guard: top_guard,
                law: cart_map,
            },
        ],
    )?;

    // --- Polar hybrid system --------------------------------------------
    let polar_sys = polar_system(p)?;
    let cyc = CyclicStructure::new(3, &[1, 2])?;
    let height = |q: &DVector<f64>| q[0] * q[1].sin();
    let height_rate = |q: &DVector<f64>, v: &DVector<f64>| {
        v[0] * q[1].sin() + q[0] * v[1] * q[1].cos()
    };
    let polar_vx = |q: &DVector<f64>, v: &DVector<f64>| v[0] * q[1].cos() - q[0] * v[1] * q[1].sin();
    let polar_bottom = Guard::with_approach(
        "bottom_wall",
        Arc::new(move |_t, q: &DVector<f64>| height(q) - radius),
        Arc::new(with_rolling_band(
            move |_t, q: &DVector<f64>, v: &DVector<f64>| height_rate(q, v),
            polar_vx,
            |_q, v| v[2],
            radius,
            band,
        )),
        false,
    )
    .with_gradient(Arc::new(|_t, q: &DVector<f64>| {
        DVector::from_row_slice(&[q[1].sin(), q[0] * q[1].cos(), 0.0])
    }));
    let polar_top = match &moving {
        None => Guard::with_approach(
            "top_wall",
            Arc::new(move |_t, q: &DVector<f64>| top_fixed - height(q)),
            Arc::new(with_rolling_band(
                move |_t, q: &DVector<f64>, v: &DVector<f64>| -height_rate(q, v),
                polar_vx,
                |_q, v| v[2],
                radius,
                band,
            )),
            false,
        ),
        Some(w) => {
            let (f, fdot) = (w.f.clone(), w.fdot.clone());
            Guard::with_approach(
                "top_wall",
                Arc::new(move |t, q: &DVector<f64>| (f(t) - radius) - height(q)),
                Arc::new(with_rolling_band(
                    move |t, q: &DVector<f64>, v: &DVector<f64>| fdot(t) - height_rate(q, v),
                    polar_vx,
                    |_q, v| v[2],
                    radius,
                    band,
                )),
                true,
            )
        }
    }
    .with_gradient(Arc::new(|_t, q: &DVector<f64>| {
        DVector::from_row_slice(&[-q[1].sin(), -q[0] * q[1].cos(), 0.0])
    }));
    // Impact conjugated through the chart: rotate to Cartesian velocities,
    // apply the printed map, rotate back at the unchanged configuration.
    let polar_map = ImpactLaw::Custom {
        map: Arc::new(move |_t, q: &DVector<f64>, v: &DVector<f64>| {
            let (r, theta) = (q[0], q[1]);
            let (st, ct) = theta.sin_cos();
            let vx = v[0] * ct - r * v[1] * st;
            let vy = v[0] * st + r * v[1] * ct;
            let (vx2, vy2, w2) = impact_velocities(radius, k, e, vx, vy, v[2]);
            let rdot = vx2 * ct + vy2 * st;
            let thetadot = (vy2 * ct - vx2 * st) / r;
            (q.clone(), DVector::from_row_slice(&[rdot, thetadot, w2]))
        }),
    };
    let polar = HybridSystem::new(
        polar_sys,
        vec![
            Transition {
                guard: polar_bottom,
                law: polar_map.clone(),
            },
            Transition {
                guard: polar_top,
                law: polar_map,
            },
        ],
    )?
    .with_cyclic(cyc);

    // --- Probes: admissible on-guard states at a fixed momentum level ----
    let wall_height = {
        let moving = moving.clone();
        move |label: &str, t: f64| -> f64 {
            if label == "bottom_wall" {
                radius
            } else {
                match &moving {
                    None => top_fixed,
                    Some(w) => (w.f)(t) - radius,
                }
            }
        }
    };
    let mk2 = m * k * k;
    let make_probe = |label: &'static str| -> GuardProbes {
        let wall_height = wall_height.clone();
        let moving = moving.clone();
        GuardProbes {
            label: label.into(),
            sample_level: Arc::new(move |rng, _t| {
                let mag1 = rng.random_range(0.3..3.0);
                let mag2 = rng.random_range(0.3..3.0);
                let s1 = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                let s2 = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                MomentumValue(DVector::from_row_slice(&[s1 * mag1, s2 * mag2]))
            }),
            sample_state: Arc::new(move |rng, t, level| {
                let (mu1, mu2) = (level.0[0], level.0[1]);
                let y_w = wall_height(label, t);
                let w = mu2 / mk2;
                let vx = radius * w; // the printed guard includes rolling
                let sigma = mu1 / m + y_w * vx;
                if sigma.abs() < 1e-9 {
                    return None;
                }
                let x_mag = rng.random_range(0.5..2.0);
                // Pick the sign of x so vy = sigma / x is admissible.
                let vy_wanted_positive = label != "bottom_wall";
                let x = if vy_wanted_positive == (sigma > 0.0) {
                    x_mag
                } else {
                    -x_mag
                };
                let vy = sigma / x;
                if let Some(wm) = &moving {
                    if label == "top_wall" && !(vy > (wm.fdot)(t)) {
                        return None;
                    }
                }
                let r = x.hypot(y_w);
                let theta = y_w.atan2(x);
                let rdot = (x * vx + y_w * vy) / r;
                let thetadot = (x * vy - y_w * vx) / (r * r);
                let vartheta = rng.random_range(0.0..std::f64::consts::TAU);
                TangentState::from_slices(t, &[r, theta, vartheta], &[rdot, thetadot, w]).ok()
            }),
        }
    };
    let probes = ClassificationProbes {
        guards: vec![make_probe("bottom_wall"), make_probe("top_wall")],
    };

    // --- Remaining bundle pieces -----------------------------------------
    let cartesian_momentum: super::MomentumEval = Arc::new(move |s: &TangentState| {
        DVector::from_row_slice(&[
            m * (s.q[0] * s.v[1] - s.q[1] * s.v[0]),
            mk2 * s.v[2],
        ])
    });
    let momentum_update: super::MomentumUpdate = Arc::new(|_guard: &str, mu: &MomentumValue| {
        MomentumValue(DVector::from_row_slice(&[-mu.0[0], mu.0[1]]))
    });
    let rotation: GeneratorEval =
        Arc::new(|q: &DVector<f64>| DVector::from_row_slice(&[-q[1], q[0], 0.0]));
    let spin: GeneratorEval = Arc::new(|_q| DVector::from_row_slice(&[0.0, 0.0, 1.0]));

    Ok(ModelBundle {
        name: if p.wall_motion.is_some() {
            "disk_moving".into()
        } else {
            "disk_fixed".into()
        },
        cartesian,
        polar,
        momentum_update,
        cartesian_momentum,
        probes,
        symmetry_generators: vec![("rotation".into(), rotation), ("spin".into(), spin)],
        to_polar: Arc::new(cart_to_polar_state),
        to_cartesian: Arc::new(polar_to_cart_state),
    })
}

//! Particle in the plane inside a circular wall of time-varying squared
//! radius f(t), with nonlinear velocity friction.
//!
//! Cartesian coordinates (x, y), time-dependent metric m e^{ct/m} I, zero
//! potential, force covector
//!   F_x = -2c e^{ct/m} (vx x y - vy x^2),  F_y = 2c e^{ct/m} (vy x y - vx y^2).
//! The guard is x^2 + y^2 = f(t) hit while heading outwards relative to the
//! moving boundary; the (elastic, moving-wall) impact map is
//!   v+ = v- + (fdot(t) - 2 (x vx + y vy)) / f(t) * (x, y),
//! which preserves the angular momentum exactly, so the momentum map
//!   J = m e^{ct/m} r^2 thetadot
//! is hybrid: impacts do not change its value.

use super::{cart_to_polar_state, polar_to_cart_state, GeneratorEval, ModelBundle, WallMotion};
use crate::classify::{ClassificationProbes, GuardProbes};
use crate::error::{Error, Result};
use crate::guard::{Guard, HybridSystem, ImpactLaw, Transition};
use crate::mech::{AnalyticDerivatives, MechanicalSystem};
use crate::state::TangentState;
use crate::symmetry::{CyclicStructure, MomentumValue};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::sync::Arc;

/// Parameters of the billiard model.
#[derive(Debug, Clone)]
pub struct BilliardParams {
    pub m: f64,
    /// Friction coefficient c > 0.
    pub dissipation: f64,
    /// Squared wall radius profile f(t) and its derivative.
    pub wall: WallMotion,
}

impl Default for BilliardParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            dissipation: 0.005,
            wall: WallMotion::exponential(2.0, 1.0, 10.0),
        }
    }
}

impl BilliardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidParams(format!("m must be > 0, got {}", self.m)));
        }
        if !(self.dissipation > 0.0) || !self.dissipation.is_finite() {
            return Err(Error::InvalidParams(format!(
                "dissipation must be > 0, got {}",
                self.dissipation
            )));
        }
        Ok(())
    }

    /// Probes the wall over a horizon: f must stay positive; a decreasing f
    /// is allowed but flagged (the wall may catch the particle; behaviour in
    /// that regime carries no correctness claim).
    pub fn probe_horizon(&self, t0: f64, t1: f64) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let mut decreasing = false;
        for k in 0..=128 {
            let t = t0 + (t1 - t0) * k as f64 / 128.0;
            let f = (self.wall.f)(t);
            if !(f > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "wall radius vanishes on the horizon: f({t}) = {f}"
                )));
            }
            if (self.wall.fdot)(t) < 0.0 {
                decreasing = true;
            }
        }
        if decreasing {
            warnings.push(
                "wall profile f(t) is decreasing on the horizon; impacts with a closing wall \
                 carry no correctness claim"
                    .to_string(),
            );
        }
        Ok(warnings)
    }
}

fn time_factor(c: f64, m: f64, t: f64) -> f64 {
    (c * t / m).exp()
}

fn cartesian_system(p: &BilliardParams) -> Result<MechanicalSystem> {
    let (m, c) = (p.m, p.dissipation);
    let sys = MechanicalSystem::new(
        2,
        Arc::new(move |t, _q: &DVector<f64>| {
            DMatrix::from_diagonal_element(2, 2, m * time_factor(c, m, t))
        }),
        Arc::new(|_t, _q| 0.0),
        Arc::new(move |t, q: &DVector<f64>, v: &DVector<f64>| {
            let ef = time_factor(c, m, t);
            let (x, y) = (q[0], q[1]);
            let (vx, vy) = (v[0], v[1]);
            DVector::from_row_slice(&[
                -2.0 * c * ef * (vx * x * y - vy * x * x),
                2.0 * c * ef * (vy * x * y - vx * y * y),
            ])
        }),
        vec!["x".into(), "y".into()],
    )?
    .with_time_dependence(true);
    Ok(sys.with_analytic(AnalyticDerivatives {
        mass_dq: Arc::new(move |_t, _q| vec![DMatrix::zeros(2, 2); 2]),
        mass_dt: Arc::new(move |t, _q| {
            DMatrix::from_diagonal_element(2, 2, c * time_factor(c, m, t))
        }),
        potential_dq: Arc::new(move |_t, _q| DVector::zeros(2)),
    }))
}

fn polar_system(p: &BilliardParams) -> Result<MechanicalSystem> {
    let (m, c) = (p.m, p.dissipation);
    let sys = MechanicalSystem::new(
        2,
        Arc::new(move |t, q: &DVector<f64>| {
            let ef = m * time_factor(c, m, t);
            DMatrix::from_diagonal(&DVector::from_row_slice(&[ef, ef * q[0] * q[0]]))
        }),
        Arc::new(|_t, _q| 0.0),
        Arc::new(move |t, q: &DVector<f64>, v: &DVector<f64>| {
            let ef = time_factor(c, m, t);
            let r = q[0];
            DVector::from_row_slice(&[2.0 * c * ef * r * r * r * v[1], 0.0])
        }),
        vec!["r".into(), "theta".into()],
    )?
    .with_time_dependence(true);
    Ok(sys.with_analytic(AnalyticDerivatives {
        mass_dq: Arc::new(move |t, q: &DVector<f64>| {
            let mut dr = DMatrix::zeros(2, 2);
            dr[(1, 1)] = 2.0 * m * time_factor(c, m, t) * q[0];
            vec![dr, DMatrix::zeros(2, 2)]
        }),
        mass_dt: Arc::new(move |t, q: &DVector<f64>| {
            let ef = c * time_factor(c, m, t);
            DMatrix::from_diagonal(&DVector::from_row_slice(&[ef, ef * q[0] * q[0]]))
        }),
        potential_dq: Arc::new(move |_t, _q| DVector::zeros(2)),
    }))
}

pub fn build_billiard(p: &BilliardParams) -> Result<ModelBundle> {
    p.validate()?;
    let (m, c) = (p.m, p.dissipation);
    let wall = p.wall.clone();

    // --- Cartesian hybrid system -----------------------------------------
    let cart_sys = cartesian_system(p)?;
    let (f1, fd1) = (wall.f.clone(), wall.fdot.clone());
    let cart_guard = Guard::with_approach(
        "wall",
        Arc::new(move |t, q: &DVector<f64>| q[0] * q[0] + q[1] * q[1] - f1(t)),
        // Admissible when the particle heads outwards faster than the wall:
        // 2 (x vx + y vy) >= fdot, encoded as approach < 0.
        Arc::new(move |t, q: &DVector<f64>, v: &DVector<f64>| {
            fd1(t) - 2.0 * (q[0] * v[0] + q[1] * v[1])
        }),
        true,
    )
    .with_gradient(Arc::new(|_t, q: &DVector<f64>| {
        DVector::from_row_slice(&[2.0 * q[0], 2.0 * q[1]])
    }));
    let (f2, fd2) = (wall.f.clone(), wall.fdot.clone());
    let cart_map = ImpactLaw::Custom {
        map: Arc::new(move |t, q: &DVector<f64>, v: &DVector<f64>| {
            let kick = (fd2(t) - 2.0 * (q[0] * v[0] + q[1] * v[1])) / f2(t);
            (
                q.clone(),
                DVector::from_row_slice(&[v[0] + kick * q[0], v[1] + kick * q[1]]),
            )
        }),
    };
    let cartesian = HybridSystem::new(
        cart_sys,
        vec![Transition {
            guard: cart_guard,
            law: cart_map,
        }],
    )?;

    // --- Polar hybrid system ----------------------------------------------
    let polar_sys = polar_system(p)?;
    let cyc = CyclicStructure::new(2, &[1])?;
    let (f3, fd3) = (wall.f.clone(), wall.fdot.clone());
    let polar_guard = Guard::with_approach(
        "wall",
        Arc::new(move |t, q: &DVector<f64>| q[0] * q[0] - f3(t)),
        Arc::new(move |t, q: &DVector<f64>, v: &DVector<f64>| fd3(t) - 2.0 * q[0] * v[0]),
        true,
    )
    .with_gradient(Arc::new(|_t, q: &DVector<f64>| {
        DVector::from_row_slice(&[2.0 * q[0], 0.0])
    }));
    let (f4, fd4) = (wall.f.clone(), wall.fdot.clone());
    // Exact pullback of the Cartesian map: the kick is radial, so
    // rdot+ = rdot- + r (fdot - 2 r rdot-) / f and thetadot is unchanged.
    let polar_map = ImpactLaw::Custom {
        map: Arc::new(move |t, q: &DVector<f64>, v: &DVector<f64>| {
            let r = q[0];
            let kick = (fd4(t) - 2.0 * r * v[0]) / f4(t);
            (
                q.clone(),
                DVector::from_row_slice(&[v[0] + kick * r, v[1]]),
            )
        }),
    };
    let polar = HybridSystem::new(
        polar_sys,
        vec![Transition {
            guard: polar_guard,
            law: polar_map,
        }],
    )?
    .with_cyclic(cyc);

    // --- Probes -------------------------------------------------------------
    let (f5, fd5) = (wall.f.clone(), wall.fdot.clone());
    let probes = ClassificationProbes {
        guards: vec![GuardProbes {
            label: "wall".into(),
            sample_level: Arc::new(move |rng, _t| {
                let mag = rng.random_range(0.3..3.0);
                let s = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                MomentumValue(DVector::from_row_slice(&[s * mag]))
            }),
            sample_state: Arc::new(move |rng, t, level| {
                let f = f5(t);
                if !(f > 0.0) {
                    return None;
                }
                let r = f.sqrt();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let thetadot = level.0[0] / (m * time_factor(c, m, t) * r * r);
                let rdot = fd5(t) / (2.0 * r) + rng.random_range(0.1..2.0);
                TangentState::from_slices(t, &[r, theta], &[rdot, thetadot]).ok()
            }),
        }],
    };

    // --- Remaining bundle pieces --------------------------------------------
    let cartesian_momentum: super::MomentumEval = Arc::new(move |s: &TangentState| {
        DVector::from_row_slice(&[
            m * time_factor(c, m, s.t) * (s.q[0] * s.v[1] - s.q[1] * s.v[0]),
        ])
    });
    let momentum_update: super::MomentumUpdate =
        Arc::new(|_guard: &str, mu: &MomentumValue| mu.clone());
    let rotation: GeneratorEval =
        Arc::new(|q: &DVector<f64>| DVector::from_row_slice(&[-q[1], q[0]]));

    Ok(ModelBundle {
        name: "billiard".into(),
        cartesian,
        polar,
        momentum_update,
        cartesian_momentum,
        probes,
        symmetry_generators: vec![("rotation".into(), rotation)],
        to_polar: Arc::new(cart_to_polar_state),
        to_cartesian: Arc::new(polar_to_cart_state),
    })
}

//! Switching surfaces, impact laws and the hybrid system tuple.

use crate::config::NumericsConfig;
use crate::error::{Error, Result};
use crate::linalg::spd_factor;
use crate::mech::MechanicalSystem;
use crate::state::{CotangentState, TangentState};
use crate::symmetry::CyclicStructure;
use nalgebra::DVector;
use std::sync::Arc;

pub type SurfaceEval = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
pub type ApproachEval = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type ImpactMap =
    Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

pub type GradientEval = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A switching surface {h(t, q) = 0} with an admissibility test: an impact
/// fires only where the approach evaluator is negative. For a Newtonian
/// guard the approach is the normal velocity dh/dt = dh/dt|_explicit + grad_q h . v.
#[derive(Clone)]
pub struct Guard {
    pub label: String,
    h: SurfaceEval,
    approach: ApproachEval,
    grad: Option<GradientEval>,
    time_dependent: bool,
}

impl std::fmt::Debug for Guard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Guard").field("label", &self.label).finish()
    }
}

impl Guard {
    /// Guard with the default approach function dh/dt computed by central
    /// differences of `h` in t and q.
    pub fn new(label: impl Into<String>, h: SurfaceEval, time_dependent: bool) -> Self {
        let hc = h.clone();
        let fd = 1e-7;
        let approach: ApproachEval = Arc::new(move |t, q, v| {
            let mut total = 0.0;
            if time_dependent {
                let ht = t.abs().max(1.0) * fd;
                total += (hc(t + ht, q) - hc(t - ht, q)) / (2.0 * ht);
            }
            for k in 0..q.len() {
                let hk = q[k].abs().max(1.0) * fd;
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += hk;
                qm[k] -= hk;
                total += (hc(t, &qp) - hc(t, &qm)) / (2.0 * hk) * v[k];
            }
            total
        });
        Self {
            label: label.into(),
            h,
            approach,
            grad: None,
            time_dependent,
        }
    }

    /// Guard with a caller-supplied approach evaluator (sign conventions in
    /// the literature differ per example, so this stays configurable).
    pub fn with_approach(
        label: impl Into<String>,
        h: SurfaceEval,
        approach: ApproachEval,
        time_dependent: bool,
    ) -> Self {
        Self {
            label: label.into(),
            h,
            approach,
            grad: None,
            time_dependent,
        }
    }

    /// Registers an exact spatial gradient of h, replacing the default
    /// central differences in the Newtonian impact formula.
    pub fn with_gradient(mut self, grad: GradientEval) -> Self {
        self.grad = Some(grad);
        self
    }

    pub fn h(&self, t: f64, q: &DVector<f64>) -> f64 {
        (self.h)(t, q)
    }

    pub fn approach(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.approach)(t, q, v)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    /// Spatial gradient of h at (t, q), exact when registered, central
    /// differences otherwise.
    pub fn grad_q(&self, t: f64, q: &DVector<f64>, cfg: &NumericsConfig) -> DVector<f64> {
        if let Some(g) = &self.grad {
            return g(t, q);
        }
        let mut g = DVector::zeros(q.len());
        for k in 0..q.len() {
            let hk = cfg.fd(q[k]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += hk;
            qm[k] -= hk;
            g[k] = ((self.h)(t, &qp) - (self.h)(t, &qm)) / (2.0 * hk);
        }
        g
    }

    /// Finite-difference sanity probe: h and its gradient must be finite and
    /// consistent under step halving at the given point.
    pub fn sanity_probe(&self, t: f64, q: &DVector<f64>, cfg: &NumericsConfig) -> Result<()> {
        let h0 = self.h(t, q);
        if !h0.is_finite() {
            return Err(Error::NonFinite(format!("guard '{}'", self.label)));
        }
        let g1 = self.grad_q(t, q, cfg);
        let halved = NumericsConfig {
            fd_step: cfg.fd_step * 0.5,
            ..cfg.clone()
        };
        let g2 = self.grad_q(t, q, &halved);
        if g1.iter().chain(g2.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("guard '{}' gradient", self.label)));
        }
        let scale = g1.norm().max(g2.norm()).max(1.0);
        if (&g1 - &g2).norm() > 1e-3 * scale {
            return Err(Error::DegenerateGuard(format!(
                "{} (gradient not consistent under step halving)",
                self.label
            )));
        }
        Ok(())
    }
}

/// Velocity- or momentum-side impact behaviour at a guard.
#[derive(Clone)]
pub enum ImpactLaw {
    /// Newtonian impact with restitution coefficient e in [0, 1].
    Newtonian { e: f64 },
    /// Arbitrary configuration-preserving map (t, q, v) -> (q', v').
    Custom { map: ImpactMap },
}

impl std::fmt::Debug for ImpactLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImpactLaw::Newtonian { e } => f.debug_struct("Newtonian").field("e", e).finish(),
            ImpactLaw::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl ImpactLaw {
    pub fn newtonian(e: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParams(format!(
                "restitution coefficient must lie in [0, 1], got {e}"
            )));
        }
        Ok(ImpactLaw::Newtonian { e })
    }
}

/// A guard paired with its impact law.
#[derive(Debug, Clone)]
pub struct Transition {
    pub guard: Guard,
    pub law: ImpactLaw,
}

/// A mechanical system together with its switching surfaces and impact laws;
/// `cyclic` optionally declares the coordinates whose momenta the executors
/// track across impacts.
#[derive(Debug, Clone)]
pub struct HybridSystem {
    pub sys: MechanicalSystem,
    pub transitions: Vec<Transition>,
    pub cyclic: Option<CyclicStructure>,
}

impl HybridSystem {
    pub fn new(sys: MechanicalSystem, transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidParams(
                "a hybrid system needs at least one transition; use HybridSystem::continuous for none"
                    .into(),
            ));
        }
        let mut labels: Vec<&str> = transitions.iter().map(|t| t.guard.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != transitions.len() {
            return Err(Error::InvalidParams("guard labels must be unique".into()));
        }
        Ok(Self {
            sys,
            transitions,
            cyclic: None,
        })
    }

    /// Purely continuous flow: no switching surfaces at all.
    pub fn continuous(sys: MechanicalSystem) -> Self {
        Self {
            sys,
            transitions: Vec::new(),
            cyclic: None,
        }
    }

    pub fn with_cyclic(mut self, cyc: CyclicStructure) -> Self {
        self.cyclic = Some(cyc);
        self
    }

    pub fn transition(&self, label: &str) -> Result<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.guard.label == label)
            .ok_or_else(|| Error::UnknownGuard(label.to_string()))
    }
}

/// Newtonian impact on the tangent side:
/// v+ = v - (1+e) (dh . v) / (dh M^-1 dh') M^-1 dh', with dh = grad_q h.
pub fn newtonian_impact(
    sys: &MechanicalSystem,
    guard: &Guard,
    e: f64,
    s: &TangentState,
    cfg: &NumericsConfig,
) -> Result<TangentState> {
    let dh = guard.grad_q(s.t, &s.q, cfg);
    let nrm = dh.norm();
    if nrm < 1e-12 {
        return Err(Error::DegenerateGuard(guard.label.clone()));
    }
    let m = sys.mass_at(s.t, &s.q)?;
    let minv_dh = spd_factor(&m)?.solve(&dh);
    let denom = dh.dot(&minv_dh);
    let normal_velocity = dh.dot(&s.v);
    let v_post = &s.v - ((1.0 + e) * normal_velocity / denom) * &minv_dh;
    TangentState::new(s.t, s.q.clone(), v_post)
}

/// Newtonian impact on the cotangent side:
/// p+ = p - (1+e) <<p, dh>> / ||dh||^2 dh, with the cometric
/// <<a, b>> = a' M^-1 b.
pub fn newtonian_impact_momentum(
    sys: &MechanicalSystem,
    guard: &Guard,
    e: f64,
    s: &CotangentState,
    cfg: &NumericsConfig,
) -> Result<CotangentState> {
    let dh = guard.grad_q(s.t, &s.q, cfg);
    if dh.norm() < 1e-12 {
        return Err(Error::DegenerateGuard(guard.label.clone()));
    }
    let m = sys.mass_at(s.t, &s.q)?;
    let chol = spd_factor(&m)?;
    let minv_dh = chol.solve(&dh);
    let pairing = s.p.dot(&minv_dh); // <<p, dh>>
    let norm_sq = dh.dot(&minv_dh); // ||dh||^2 in the cometric
    let p_post = &s.p - ((1.0 + e) * pairing / norm_sq) * &dh;
    CotangentState::new(s.t, s.q.clone(), p_post)
}

/// Dispatches the named transition's law at a state on the guard.
pub fn apply_impact(
    hs: &HybridSystem,
    guard_label: &str,
    s: &TangentState,
    cfg: &NumericsConfig,
) -> Result<TangentState> {
    let tr = hs.transition(guard_label)?;
    apply_law(&hs.sys, &tr.guard, &tr.law, s, cfg)
}

pub(crate) fn apply_law(
    sys: &MechanicalSystem,
    guard: &Guard,
    law: &ImpactLaw,
    s: &TangentState,
    cfg: &NumericsConfig,
) -> Result<TangentState> {
    match law {
        ImpactLaw::Newtonian { e } => newtonian_impact(sys, guard, *e, s, cfg),
        ImpactLaw::Custom { map } => {
            let (q_post, v_post) = map(s.t, &s.q, &s.v);
            let dq = (&q_post - &s.q).norm();
            if dq > 1e-9 * s.q.norm().max(1.0) {
                return Err(Error::ImpactMovedConfiguration(dq));
            }
            TangentState::new(s.t, q_post, v_post)
        }
    }
}

/// Cotangent-side dispatch: Newtonian laws use the momentum formula directly,
/// custom laws are conjugated through the fiber derivative, which enforces the
/// Lagrangian/Hamiltonian compatibility by construction.
pub(crate) fn apply_law_momentum(
    sys: &MechanicalSystem,
    guard: &Guard,
    law: &ImpactLaw,
    s: &CotangentState,
    cfg: &NumericsConfig,
) -> Result<CotangentState> {
    match law {
        ImpactLaw::Newtonian { e } => newtonian_impact_momentum(sys, guard, *e, s, cfg),
        ImpactLaw::Custom { .. } => {
            let tangent = sys.legendre_inverse(s)?;
            let post = apply_law(sys, guard, law, &tangent, cfg)?;
            sys.legendre_forward(&post)
        }
    }
}

//! Empirical classification of the impact behaviour of a momentum map, and
//! hybrid-constant checks.
//!
//! A momentum map is *hybrid* when impacts preserve its value, and
//! *generalized hybrid* when impacts carry each level set onto a single
//! other level set (the value may change, but only as a function of the
//! incoming value). The verdict is estimated from the record's events plus
//! seeded random probe states sampled on each guard at fixed momentum
//! levels.

use crate::config::NumericsConfig;
use crate::error::{Error, Result};
use crate::exec::{FlowSide, HybridFlowRecord};
use crate::guard::{apply_impact, HybridSystem};
use crate::state::TangentState;
use crate::symmetry::{momentum_map, MomentumValue};
use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Tolerance for momentum preservation / level-set consistency, relative to
/// max(1, |mu|).
pub const CLASSIFY_TOL: f64 = 1e-8;
/// Probe states per guard per momentum level.
pub const PROBES_PER_LEVEL: usize = 20;
/// Extra randomized momentum levels per guard beyond the event levels.
pub const RANDOM_LEVELS: usize = 3;

pub type LevelSampler = Arc<dyn Fn(&mut ChaCha8Rng, f64) -> MomentumValue + Send + Sync>;
pub type StateSampler =
    Arc<dyn Fn(&mut ChaCha8Rng, f64, &MomentumValue) -> Option<TangentState> + Send + Sync>;

/// Random on-guard state generation for one guard: a momentum-level sampler
/// and a same-level admissible pre-state sampler.
#[derive(Clone)]
pub struct GuardProbes {
    pub label: String,
    pub sample_level: LevelSampler,
    pub sample_state: StateSampler,
}

/// Probe generators for every guard of a hybrid system.
#[derive(Clone, Default)]
pub struct ClassificationProbes {
    pub guards: Vec<GuardProbes>,
}

/// Verdict on the impact behaviour of the momentum map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Hybrid,
    Generalized,
    Neither,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Hybrid => write!(f, "hybrid"),
            Verdict::Generalized => write!(f, "generalized"),
            Verdict::Neither => write!(f, "neither"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    /// (mu_pre, mu_post) at every recorded event.
    pub event_momenta: Vec<(DVector<f64>, DVector<f64>)>,
    /// Largest spread of post-momenta within one probed level set.
    pub max_level_violation: f64,
    /// Largest |mu_post - mu_pre| seen anywhere (events and probes).
    pub max_preservation_violation: f64,
    pub levels_probed: usize,
    pub probes_per_level: usize,
}

fn rel(delta: f64, scale: f64) -> f64 {
    delta / scale.max(1.0)
}

/// Classifies the momentum map of `hs` against its impact maps using the
/// record's events and randomized same-level probe states on each guard.
pub fn classify_momentum_map(
    hs: &HybridSystem,
    record: &HybridFlowRecord,
    probes: &ClassificationProbes,
    cfg: &NumericsConfig,
) -> Result<ClassificationReport> {
    let cyc = hs
        .cyclic
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("hybrid system declares no cyclic structure".into()))?;
    if record.side != FlowSide::Lagrangian {
        return Err(Error::InvalidParams(
            "classification expects a tangent-side record".into(),
        ));
    }
    if record.events.is_empty() {
        return Err(Error::EmptyRecord);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_C1A5);
    let mut preserved = true;
    let mut max_pres: f64 = 0.0;
    let mut max_level: f64 = 0.0;
    let mut event_momenta = Vec::with_capacity(record.events.len());

    for e in &record.events {
        let d = rel((&e.mu_post - &e.mu_pre).norm(), e.mu_pre.norm());
        max_pres = max_pres.max(d);
        if d > CLASSIFY_TOL {
            preserved = false;
        }
        event_momenta.push((e.mu_pre.clone(), e.mu_post.clone()));
    }

    // Momentum levels to probe: each event's incoming level plus seeded
    // random levels, at the event times (moving guards need a time).
    let mut consistent = true;
    let mut levels_probed = 0usize;
    for e in &record.events {
        let gp = probes
            .guards
            .iter()
            .find(|g| g.label == e.guard_label)
            .ok_or_else(|| Error::ProbeFailed(e.guard_label.clone(), "no probe sampler".into()))?;
        let mut levels = vec![MomentumValue(e.mu_pre.clone())];
        for _ in 0..RANDOM_LEVELS {
            levels.push((gp.sample_level)(&mut rng, e.time));
        }
        for level in levels {
            let mut posts: Vec<DVector<f64>> = Vec::with_capacity(PROBES_PER_LEVEL);
            let mut attempts = 0;
            while posts.len() < PROBES_PER_LEVEL && attempts < 20 * PROBES_PER_LEVEL {
                attempts += 1;
                let Some(state) = (gp.sample_state)(&mut rng, e.time, &level) else {
                    continue;
                };
                // The sampler must put the state on the guard at the level.
                let mu_probe = momentum_map(&hs.sys, cyc, &state)?;
                if rel((&mu_probe.0 - &level.0).norm(), level.0.norm()) > 1e-6 {
                    return Err(Error::ProbeFailed(
                        e.guard_label.clone(),
                        format!(
                            "sampled state has momentum {:?}, expected level {:?}",
                            mu_probe.0, level.0
                        ),
                    ));
                }
                let post = apply_impact(hs, &e.guard_label, &state, cfg)?;
                let mu_post = momentum_map(&hs.sys, cyc, &post)?;
                let d = rel((&mu_post.0 - &level.0).norm(), level.0.norm());
                max_pres = max_pres.max(d);
                if d > CLASSIFY_TOL {
                    preserved = false;
                }
                posts.push(mu_post.0);
            }
            if posts.len() < 2 {
                continue; // level admits too few admissible states
            }
            levels_probed += 1;
            let first = posts[0].clone();
            for p in &posts[1..] {
                let spread = rel((p - &first).norm(), first.norm());
                max_level = max_level.max(spread);
                if spread > CLASSIFY_TOL {
                    consistent = false;
                }
            }
        }
    }

    let verdict = if preserved {
        Verdict::Hybrid
    } else if consistent {
        Verdict::Generalized
    } else {
        Verdict::Neither
    };
    Ok(ClassificationReport {
        verdict,
        event_momenta,
        max_level_violation: max_level,
        max_preservation_violation: max_pres,
        levels_probed,
        probes_per_level: PROBES_PER_LEVEL,
    })
}

/// Drift/jump report for a candidate hybrid constant of the motion.
#[derive(Debug, Clone)]
pub struct HybridConstantReport {
    /// Largest |f - f(arc start)| along any arc.
    pub max_drift: f64,
    /// Largest |f(post) - f(pre)| across any event.
    pub max_jump: f64,
}

impl HybridConstantReport {
    pub fn is_hybrid_constant(&self, tol: f64) -> bool {
        self.max_drift <= tol && self.max_jump <= tol
    }
}

/// Evaluates drift of `f` along every arc (on a uniform per-arc grid) and its
/// jumps across events.
pub fn check_hybrid_constant(
    record: &HybridFlowRecord,
    f: &dyn Fn(&TangentState) -> f64,
    samples_per_arc: usize,
) -> Result<HybridConstantReport> {
    if record.side != FlowSide::Lagrangian {
        return Err(Error::InvalidParams(
            "hybrid-constant checks expect a tangent-side record".into(),
        ));
    }
    if record.arcs.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let mut max_drift: f64 = 0.0;
    for arc in &record.arcs {
        let (t0, t1) = (arc.t_start(), arc.t_end());
        if !(t1 > t0) {
            continue;
        }
        let y0 = arc.eval(t0).unwrap();
        let f0 = f(&record.tangent_state(t0, &y0)?);
        let n = samples_per_arc.max(2);
        for k in 0..=n {
            let t = t0 + (t1 - t0) * k as f64 / n as f64;
            let y = arc.eval(t).unwrap();
            let fv = f(&record.tangent_state(t, &y)?);
            max_drift = max_drift.max((fv - f0).abs());
        }
    }
    let mut max_jump: f64 = 0.0;
    for e in &record.events {
        let pre = TangentState::new(e.time, e.q.clone(), e.w_pre.clone())?;
        let post = TangentState::new(e.time, e.q.clone(), e.w_post.clone())?;
        max_jump = max_jump.max((f(&post) - f(&pre)).abs());
    }
    Ok(HybridConstantReport { max_drift, max_jump })
}

//! Reduced hybrid execution and reconstruction.
//!
//! The reduced runner integrates shape coordinates under the Routhian
//! dynamics while carrying the cyclic phases kinematically (their rates come
//! from the momentum relation, never from extra dynamics). Guards are
//! evaluated on the lifted full state, so surfaces that quantify over the
//! cyclic phase are checked pointwise. After each impact the post momentum is
//! obtained by reconstructing the full pre-impact state, applying the full
//! impact map and projecting; the shape system is then reduced again at the
//! new momentum before integration continues.

use crate::config::NumericsConfig;
use crate::error::{Error, Result};
use crate::exec::{drive, FlowArc, HybridProblem, RawFlow, Termination};
use crate::guard::{apply_law, HybridSystem};
use crate::state::TangentState;
use crate::symmetry::{momentum_map, routh_reduce, CyclicStructure, MomentumValue, ReducedSystem};
use nalgebra::DVector;
use std::cell::RefCell;

/// Impact bookkeeping of a reduced run.
#[derive(Debug, Clone)]
pub struct ReducedImpactEvent {
    pub time: f64,
    pub guard_label: String,
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub xdot_pre: DVector<f64>,
    pub xdot_post: DVector<f64>,
    pub mu_pre: MomentumValue,
    pub mu_post: MomentumValue,
}

/// The executed reduced hybrid flow: shape arcs, impact events and the
/// per-arc momentum sequence. Arc phase vectors are laid out [x; xdot; theta].
#[derive(Debug, Clone)]
pub struct ReducedFlowRecord {
    pub shape_dim: usize,
    pub cyclic_dim: usize,
    pub arcs: Vec<FlowArc>,
    pub events: Vec<ReducedImpactEvent>,
    pub mu_sequence: Vec<MomentumValue>,
    pub termination: Termination,
}

impl ReducedFlowRecord {
    /// Splits a raw phase vector into (x, xdot, theta).
    pub fn split(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        split_y(y, self.shape_dim, self.cyclic_dim)
    }

    pub fn t_end(&self) -> f64 {
        self.arcs.last().map(|a| a.t_end()).unwrap_or(f64::NAN)
    }

    /// Momentum value in force during arc `i`.
    pub fn mu_for_arc(&self, i: usize) -> &MomentumValue {
        &self.mu_sequence[i]
    }
}

fn split_y(y: &DVector<f64>, ns: usize, nc: usize) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    (
        DVector::from_fn(ns, |i, _| y[i]),
        DVector::from_fn(ns, |i, _| y[ns + i]),
        DVector::from_fn(nc, |i, _| y[2 * ns + i]),
    )
}

fn pack_y(x: &DVector<f64>, xdot: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let ns = x.len();
    let nc = theta.len();
    DVector::from_fn(2 * ns + nc, |i, _| {
        if i < ns {
            x[i]
        } else if i < 2 * ns {
            xdot[i - ns]
        } else {
            theta[i - 2 * ns]
        }
    })
}

struct ReducedProblem<'a> {
    hs: &'a HybridSystem,
    cyc: &'a CyclicStructure,
    cfg: &'a NumericsConfig,
    current: RefCell<ReducedSystem>,
    mu_log: RefCell<Vec<MomentumValue>>,
}

impl ReducedProblem<'_> {
    fn lift(&self, t: f64, y: &DVector<f64>) -> Result<TangentState> {
        let (x, xdot, theta) = split_y(y, self.cyc.shape_dim(), self.cyc.cyclic_dim());
        self.current.borrow().lift(t, &x, &xdot, &theta)
    }
}

impl HybridProblem for ReducedProblem<'_> {
    fn rhs(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()> {
        let ns = self.cyc.shape_dim();
        let nc = self.cyc.cyclic_dim();
        let (x, xdot, _) = split_y(y, ns, nc);
        let red = self.current.borrow();
        let shape_state = TangentState {
            t,
            q: x.clone(),
            v: xdot.clone(),
        };
        let field = red.reduced_field(&shape_state, self.cfg);
        let rates = red.cyclic_rates(t, &x, &xdot);
        match (field, rates) {
            (Ok(f), Ok(r)) => {
                for i in 0..ns {
                    dy[i] = xdot[i];
                    dy[ns + i] = f.dw[i];
                }
                for i in 0..nc {
                    dy[2 * ns + i] = r[i];
                }
                Ok(())
            }
            (Err(e), _) | (_, Err(e)) => match e {
                Error::NonFinite(_) | Error::SingularMetric { .. } | Error::Regularity(_) => {
                    dy.fill(f64::NAN);
                    Ok(())
                }
                other => Err(other),
            },
        }
    }

    fn n_guards(&self) -> usize {
        self.hs.transitions.len()
    }

    fn guard_label(&self, i: usize) -> &str {
        &self.hs.transitions[i].guard.label
    }

    fn guard_h(&self, i: usize, t: f64, y: &DVector<f64>) -> f64 {
        match self.lift(t, y) {
            Ok(s) => self.hs.transitions[i].guard.h(t, &s.q),
            Err(_) => f64::NAN,
        }
    }

    fn guard_approach(&self, i: usize, t: f64, y: &DVector<f64>) -> f64 {
        match self.lift(t, y) {
            Ok(s) => self.hs.transitions[i].guard.approach(t, &s.q, &s.v),
            Err(_) => f64::NAN,
        }
    }

    fn impact(&self, i: usize, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let full_pre = self.lift(t, y)?;
        let tr = &self.hs.transitions[i];
        let full_post = apply_law(&self.hs.sys, &tr.guard, &tr.law, &full_pre, self.cfg)?;
        let mu_post = momentum_map(&self.hs.sys, self.cyc, &full_post)?;
        // Isotropy bookkeeping: the group (translations of the cyclic block)
        // acts the same way before and after the impact, so the new level
        // must reduce against the unchanged cyclic structure.
        if mu_post.dim() != self.cyc.cyclic_dim() {
            return Err(Error::Regularity(
                "impact changed the dimension of the momentum level".into(),
            ));
        }
        let xdot_post = self.cyc.shape_part(&full_post.v);
        let (x, _, theta) = split_y(y, self.cyc.shape_dim(), self.cyc.cyclic_dim());
        *self.current.borrow_mut() = routh_reduce(&self.hs.sys, self.cyc, &mu_post)?;
        self.mu_log.borrow_mut().push(mu_post);
        Ok(pack_y(&x, &xdot_post, &theta))
    }
}

/// Runs the reduced hybrid flow from a full-chart initial state whose
/// momentum fixes mu_0. The hybrid system must declare its cyclic structure.
pub fn run_reduced_hybrid_flow(
    hs: &HybridSystem,
    s0: &TangentState,
    t_end: f64,
    cfg: &NumericsConfig,
) -> Result<ReducedFlowRecord> {
    let cyc = hs
        .cyclic
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("hybrid system declares no cyclic structure".into()))?;
    let mu0 = momentum_map(&hs.sys, cyc, s0)?;
    let red0 = routh_reduce(&hs.sys, cyc, &mu0)?;
    let x0 = cyc.shape_part(&s0.q);
    let xdot0 = cyc.shape_part(&s0.v);
    let theta0 = cyc.cyclic_part(&s0.q);

    let problem = ReducedProblem {
        hs,
        cyc,
        cfg,
        current: RefCell::new(red0),
        mu_log: RefCell::new(vec![mu0]),
    };
    let raw: RawFlow = drive(
        &problem,
        s0.t,
        pack_y(&x0, &xdot0, &theta0),
        t_end,
        cfg,
        false,
    )?;

    let mu_all = problem.mu_log.into_inner();
    let ns = cyc.shape_dim();
    let nc = cyc.cyclic_dim();
    let events: Vec<ReducedImpactEvent> = raw
        .events
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let (x, xdot_pre, theta) = split_y(&e.y_pre, ns, nc);
            let (_, xdot_post, _) = split_y(&e.y_post, ns, nc);
            ReducedImpactEvent {
                time: e.t,
                guard_label: hs.transitions[e.guard].guard.label.clone(),
                x,
                theta,
                xdot_pre,
                xdot_post,
                mu_pre: mu_all[k].clone(),
                mu_post: mu_all[k + 1].clone(),
            }
        })
        .collect();

    let mu_sequence = mu_all[..raw.arcs.len().min(mu_all.len())].to_vec();
    Ok(ReducedFlowRecord {
        shape_dim: ns,
        cyclic_dim: nc,
        arcs: raw.arcs,
        events,
        mu_sequence,
        termination: raw.termination,
    })
}

/// Reconstructs full states from a reduced record by quadrature of the
/// momentum relation:
///   thetadot(t) = M_theta^-1 (mu_i - M_thetax xdot(t)),
///   theta(t)    = theta(tau_i+) + integral of thetadot,
/// chaining the cyclic configuration through the (configuration-preserving)
/// impacts. Output is sampled on the record's own grid.
pub fn reconstruct(
    full_sys: &crate::mech::MechanicalSystem,
    cyc: &CyclicStructure,
    record: &ReducedFlowRecord,
    theta0: &DVector<f64>,
) -> Result<Vec<TangentState>> {
    if record.mu_sequence.len() < record.arcs.len() {
        return Err(Error::MissingMomentumSequence);
    }
    if theta0.len() != cyc.cyclic_dim() {
        return Err(Error::DimensionMismatch {
            expected: cyc.cyclic_dim(),
            got: theta0.len(),
        });
    }
    let ns = record.shape_dim;
    let nc = record.cyclic_dim;

    let rates_at = |mu: &MomentumValue, t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, xdot, _) = split_y(y, ns, nc);
        let q = cyc.assemble(&x, &DVector::zeros(nc));
        let m = full_sys.mass_at(t, &q)?;
        let (_, m_cx, m_c) = cyc.mass_blocks(&m);
        crate::linalg::spd_solve(&m_c, &(&mu.0 - &m_cx * &xdot))
            .map_err(|_| Error::Regularity("cyclic mass block singular in reconstruction".into()))
    };

    let mut out = Vec::new();
    let mut theta = theta0.clone();
    for (i, arc) in record.arcs.iter().enumerate() {
        let mu = &record.mu_sequence[i];
        let mut prev_t = arc.t_start();
        for (k, (t_k, y_k)) in arc.samples.iter().enumerate() {
            if k > 0 {
                // Integrate thetadot over [prev_t, t_k] with composite
                // Simpson on the dense output; trapezoid on raw samples.
                let dt = t_k - prev_t;
                if dt > 0.0 {
                    let increment = if arc.dense.is_some() {
                        // The rate can peak sharply at close approaches, so
                        // the per-interval quadrature is oversampled well
                        // beyond the integrator's own step resolution.
                        let panels = 16;
                        let mut acc = DVector::zeros(nc);
                        let n_nodes = 2 * panels;
                        let mut nodes = Vec::with_capacity(n_nodes + 1);
                        for j in 0..=n_nodes {
                            let tj = prev_t + dt * j as f64 / n_nodes as f64;
                            let yj = arc.eval(tj).unwrap();
                            nodes.push(rates_at(mu, tj, &yj)?);
                        }
                        for (j, node) in nodes.iter().enumerate() {
                            let w = if j == 0 || j == n_nodes {
                                1.0
                            } else if j % 2 == 1 {
                                4.0
                            } else {
                                2.0
                            };
                            acc += w * node;
                        }
                        acc * (dt / n_nodes as f64 / 3.0)
                    } else {
                        let y_prev = arc.samples[k - 1].1.clone();
                        let r0 = rates_at(mu, prev_t, &y_prev)?;
                        let r1 = rates_at(mu, *t_k, y_k)?;
                        (r0 + r1) * (0.5 * dt)
                    };
                    theta += increment;
                }
            }
            let (x, xdot, _) = split_y(y_k, ns, nc);
            let rates = rates_at(mu, *t_k, y_k)?;
            let q = cyc.assemble(&x, &theta);
            let v = cyc.assemble(&xdot, &rates);
            out.push(TangentState::new(*t_k, q, v)?);
            prev_t = *t_k;
        }
        // Cyclic jump across the impact is the identity for every law in
        // scope, so theta chains continuously into the next arc.
    }
    Ok(out)
}

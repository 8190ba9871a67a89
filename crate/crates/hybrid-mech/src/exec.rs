//! Event-driven execution of simple hybrid flows.
//!
//! Continuous arcs are integrated with the adaptive stepper; each accepted
//! step is scanned for guard crossings on a fixed subsample grid of its dense
//! output, crossings are localized by bisection, the impact law is applied
//! and integration restarts. A guard that just fired is masked until the
//! state leaves its event band; leaving the band on the penetrating side
//! while still approaching, or two impacts closer than the Zeno gap, stops
//! the run with a Zeno flag.

use crate::config::{NumericsConfig, MAX_BISECTIONS};
use crate::error::{Error, Result};
use crate::guard::{apply_law, apply_law_momentum, HybridSystem};
use crate::mech::MechanicalSystem;
use crate::ode::{DenseOutput, Dopri5, OdeRhs};
use crate::state::{CotangentState, TangentState};
use crate::symmetry::momentum_map;
use nalgebra::DVector;

/// How many interior subsamples of each accepted step the guard scan uses.
const SCAN_POINTS: usize = 8;
/// Minimum separating approach for a masked guard to re-arm.
const APPROACH_REARM: f64 = 1e-12;

/// Which phase space a record's states live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSide {
    /// States are (t, q, v).
    Lagrangian,
    /// States are (t, q, p).
    Hamiltonian,
    /// States are (t, x, xdot) on shape space with carried cyclic phases.
    ReducedShape,
}

/// Why a hybrid flow stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    TimeHorizonReached,
    ZenoDetected,
    IntegrationFailure(String),
}

/// One continuous arc: accepted-step samples plus the dense output covering
/// them.
#[derive(Debug, Clone)]
pub struct FlowArc {
    pub samples: Vec<(f64, DVector<f64>)>,
    pub dense: Option<DenseOutput>,
}

impl FlowArc {
    pub fn t_start(&self) -> f64 {
        self.samples.first().map(|(t, _)| *t).unwrap_or(f64::NAN)
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map(|(t, _)| *t).unwrap_or(f64::NAN)
    }

    pub fn start(&self) -> &(f64, DVector<f64>) {
        self.samples.first().expect("empty arc")
    }

    pub fn end(&self) -> &(f64, DVector<f64>) {
        self.samples.last().expect("empty arc")
    }

    /// Dense evaluation clamped to the arc, falling back to linear
    /// interpolation of the samples when no dense output is attached.
    pub fn eval(&self, t: f64) -> Option<DVector<f64>> {
        let t = t.clamp(self.t_start(), self.t_end());
        if let Some(d) = &self.dense {
            if let Some(y) = d.eval(t) {
                if t >= self.t_end() {
                    return Some(self.end().1.clone());
                }
                return Some(y);
            }
        }
        match self.samples.iter().position(|(ts, _)| *ts >= t) {
            Some(0) => Some(self.samples[0].1.clone()),
            Some(i) => {
                let (t0, y0) = &self.samples[i - 1];
                let (t1, y1) = &self.samples[i];
                let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                Some(y0 * (1.0 - w) + y1 * w)
            }
            None => Some(self.end().1.clone()),
        }
    }

    /// Test constructor from raw samples.
    pub fn from_samples(samples: Vec<(f64, DVector<f64>)>) -> Self {
        Self {
            samples,
            dense: None,
        }
    }
}

/// An impact: time, shared configuration, pre/post fiber coordinates and the
/// momentum-map values when a cyclic structure is declared.
#[derive(Debug, Clone)]
pub struct ImpactEvent {
    pub time: f64,
    pub guard_label: String,
    pub q: DVector<f64>,
    pub w_pre: DVector<f64>,
    pub w_post: DVector<f64>,
    pub mu_pre: DVector<f64>,
    pub mu_post: DVector<f64>,
}

/// The executed hybrid flow. `arcs[i]` ends at `events[i]` and `arcs[i+1]`
/// starts at its post state; on Zeno or failure termination the trailing arc
/// may be absent.
#[derive(Debug, Clone)]
pub struct HybridFlowRecord {
    pub side: FlowSide,
    pub dim: usize,
    pub arcs: Vec<FlowArc>,
    pub events: Vec<ImpactEvent>,
    pub termination: Termination,
}

impl HybridFlowRecord {
    pub fn t_start(&self) -> f64 {
        self.arcs.first().map(|a| a.t_start()).unwrap_or(f64::NAN)
    }

    pub fn t_end(&self) -> f64 {
        self.arcs.last().map(|a| a.t_end()).unwrap_or(f64::NAN)
    }

    /// Splits a raw phase vector into (q, w).
    pub fn split(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_fn(self.dim, |i, _| y[i]),
            DVector::from_fn(self.dim, |i, _| y[self.dim + i]),
        )
    }

    /// State at time t, searching the arc covering it (the earlier arc wins
    /// at impact times).
    pub fn eval(&self, t: f64) -> Option<DVector<f64>> {
        let arc = self
            .arcs
            .iter()
            .find(|a| t <= a.t_end())
            .or_else(|| self.arcs.last())?;
        arc.eval(t)
    }

    pub fn tangent_state(&self, t: f64, y: &DVector<f64>) -> Result<TangentState> {
        let (q, w) = self.split(y);
        TangentState::new(t, q, w)
    }

    pub fn cotangent_state(&self, t: f64, y: &DVector<f64>) -> Result<CotangentState> {
        let (q, w) = self.split(y);
        CotangentState::new(t, q, w)
    }
}

// ---------------------------------------------------------------------------
// Generic driver
// ---------------------------------------------------------------------------

/// A hybrid problem in first-order form: the phase vector `y`, its dynamics,
/// the guard functions and the impact maps.
pub(crate) trait HybridProblem {
    /// Fills dy; non-finite entries signal the stepper to shrink.
    fn rhs(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()>;
    fn n_guards(&self) -> usize;
    fn guard_label(&self, i: usize) -> &str;
    fn guard_h(&self, i: usize, t: f64, y: &DVector<f64>) -> f64;
    fn guard_approach(&self, i: usize, t: f64, y: &DVector<f64>) -> f64;
    fn impact(&self, i: usize, t: f64, y: &DVector<f64>) -> Result<DVector<f64>>;
}

pub(crate) struct RawEvent {
    pub t: f64,
    pub guard: usize,
    pub y_pre: DVector<f64>,
    pub y_post: DVector<f64>,
}

pub(crate) struct RawFlow {
    pub arcs: Vec<FlowArc>,
    pub events: Vec<RawEvent>,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy)]
enum GuardState {
    /// `conf` is the last (time, sign) at which |h| was confidently outside
    /// the event band.
    Armed { conf: Option<(f64, f64)> },
    /// Fired recently; `pen` is the sign of the side the trajectory was
    /// entering when it fired.
    Masked { pen: f64 },
}

struct Crossing {
    t: f64,
    y: DVector<f64>,
    guard: usize,
}

enum StepOutcome {
    Continue,
    Crossing(Crossing),
    Zeno(f64),
}

struct Scanner<'p> {
    problem: &'p dyn HybridProblem,
    states: Vec<GuardState>,
    bands: Vec<f64>,
}

impl<'p> Scanner<'p> {
    fn new(problem: &'p dyn HybridProblem, t0: f64, y0: &DVector<f64>, cfg: &NumericsConfig) -> Self {
        let n = problem.n_guards();
        let mut bands = Vec::with_capacity(n);
        for i in 0..n {
            let h0 = problem.guard_h(i, t0, y0).abs();
            bands.push(cfg.event_tol * h0.max(1.0));
        }
        Scanner {
            problem,
            states: vec![GuardState::Armed { conf: None }; n],
            bands,
        }
    }

    /// Resets confident-sign anchors at the start of every arc so bisection
    /// brackets never span an impact.
    fn begin_arc(&mut self, t: f64, y: &DVector<f64>) {
        for i in 0..self.states.len() {
            if let GuardState::Armed { conf } = &mut self.states[i] {
                let h = self.problem.guard_h(i, t, y);
                *conf = if h.abs() > self.bands[i] {
                    Some((t, h.signum()))
                } else {
                    None
                };
            }
        }
    }

    /// Walks one guard over the subsample grid. Returns the candidate
    /// crossing or Zeno time and the guard state reached at `clip` (or the
    /// step end).
    #[allow(clippy::too_many_arguments)]
    fn walk_guard(
        &self,
        i: usize,
        ts: &[f64],
        ys: &[DVector<f64>],
        arc_dense: &DenseOutput,
        clip: f64,
    ) -> Result<(GuardState, Option<Crossing>, Option<f64>)> {
        let band = self.bands[i];
        let mut state = self.states[i];
        for (j, (&t, y)) in ts.iter().zip(ys.iter()).enumerate() {
            if t > clip {
                break;
            }
            let h = self.problem.guard_h(i, t, y);
            if !h.is_finite() {
                return Err(Error::NonFinite(format!(
                    "guard '{}'",
                    self.problem.guard_label(i)
                )));
            }
            match state {
                GuardState::Masked { pen } => {
                    let appr = self.problem.guard_approach(i, t, y);
                    if h * pen > 2.0 * band && appr < 0.0 {
                        // Left the band on the penetrating side while still
                        // approaching: the impact law cannot separate the
                        // state from the guard, i.e. an accumulation.
                        return Ok((state, None, Some(t)));
                    }
                    // Re-arm on a confident excursion to the allowed side, or
                    // on strictly separating approach (a plastic impact leaves
                    // approach at rounding level and must stay masked). The
                    // allowed side becomes the confident sign even inside the
                    // band, so a bounce shorter than a scan interval still
                    // produces a detectable sign flip when it returns.
                    if h * (-pen) > 2.0 * band || appr > APPROACH_REARM {
                        state = GuardState::Armed {
                            conf: Some((t, -pen)),
                        };
                    }
                }
                GuardState::Armed { conf } => {
                    if h.abs() > band {
                        let s = h.signum();
                        match conf {
                            None => state = GuardState::Armed { conf: Some((t, s)) },
                            Some((_, sc)) if s == sc => {
                                state = GuardState::Armed { conf: Some((t, s)) }
                            }
                            Some((tc, sc)) => {
                                // Sign flip relative to the last confident
                                // sample: localize the crossing in (tc, t].
                                let cross =
                                    self.bisect(i, tc, sc, t, h, arc_dense, band)?;
                                let appr = self
                                    .problem
                                    .guard_approach(i, cross.t, &cross.y);
                                if appr < 0.0 {
                                    return Ok((state, Some(cross), None));
                                }
                                // Passed through without admissible approach.
                                state = GuardState::Armed { conf: Some((t, s)) };
                            }
                        }
                    } else if j == 0 {
                        // keep walking; in-band samples do not update conf
                    }
                }
            }
        }
        Ok((state, None, None))
    }

    /// Bisection on the arc dense output over [ta, tb], where h has sign
    /// `sign_a` at ta and value `hb` at tb.
    #[allow(clippy::too_many_arguments)]
    fn bisect(
        &self,
        i: usize,
        mut ta: f64,
        sign_a: f64,
        mut tb: f64,
        _hb: f64,
        arc_dense: &DenseOutput,
        band: f64,
    ) -> Result<Crossing> {
        let eval = |t: f64| -> DVector<f64> {
            arc_dense
                .eval(t)
                .expect("bisection time outside arc dense output")
        };
        let mut t_mid = 0.5 * (ta + tb);
        let mut y_mid = eval(t_mid);
        for _ in 0..MAX_BISECTIONS {
            t_mid = 0.5 * (ta + tb);
            y_mid = eval(t_mid);
            let h_mid = self.problem.guard_h(i, t_mid, &y_mid);
            if h_mid.abs() <= band {
                return Ok(Crossing {
                    t: t_mid,
                    y: y_mid,
                    guard: i,
                });
            }
            if h_mid.signum() == sign_a {
                ta = t_mid;
            } else {
                tb = t_mid;
            }
        }
        let residual = self.problem.guard_h(i, t_mid, &y_mid).abs();
        if residual <= 1e3 * band {
            return Ok(Crossing {
                t: t_mid,
                y: y_mid,
                guard: i,
            });
        }
        Err(Error::EventLocalizationFailed {
            guard: self.problem.guard_label(i).to_string(),
            residual,
        })
    }

    /// Scans one accepted step. On a crossing or Zeno the guard states are
    /// committed only up to the truncation time.
    fn scan_step(
        &mut self,
        seg_t0: f64,
        seg_t1: f64,
        arc_dense: &DenseOutput,
    ) -> Result<StepOutcome> {
        let n_guards = self.states.len();
        if n_guards == 0 {
            return Ok(StepOutcome::Continue);
        }
        let mut ts = Vec::with_capacity(SCAN_POINTS + 1);
        for k in 0..=SCAN_POINTS {
            ts.push(seg_t0 + (seg_t1 - seg_t0) * k as f64 / SCAN_POINTS as f64);
        }
        let ys: Vec<DVector<f64>> = ts
            .iter()
            .map(|&t| arc_dense.eval(t).expect("subsample outside dense output"))
            .collect();

        // First pass: candidates with the step fully visible.
        let mut best_cross: Option<Crossing> = None;
        let mut best_zeno: Option<f64> = None;
        for i in 0..n_guards {
            let (_, cross, zeno) = self.walk_guard(i, &ts, &ys, arc_dense, f64::INFINITY)?;
            if let Some(c) = cross {
                let better = match &best_cross {
                    None => true,
                    Some(b) => c.t < b.t,
                };
                if better {
                    best_cross = Some(c);
                }
            }
            if let Some(z) = zeno {
                best_zeno = Some(match best_zeno {
                    None => z,
                    Some(b) => b.min(z),
                });
            }
        }

        let truncation = match (&best_cross, best_zeno) {
            (Some(c), Some(z)) => {
                if z < c.t {
                    Some(z)
                } else {
                    Some(c.t)
                }
            }
            (Some(c), None) => Some(c.t),
            (None, Some(z)) => Some(z),
            (None, None) => None,
        };

        // Second pass: commit states up to the truncation point.
        let clip = truncation.unwrap_or(f64::INFINITY);
        for i in 0..n_guards {
            let (state, _, _) = self.walk_guard(i, &ts, &ys, arc_dense, clip)?;
            self.states[i] = state;
        }

        match (best_cross, best_zeno) {
            (Some(c), Some(z)) if z < c.t => Ok(StepOutcome::Zeno(z)),
            (Some(c), _) => Ok(StepOutcome::Crossing(c)),
            (None, Some(z)) => Ok(StepOutcome::Zeno(z)),
            (None, None) => Ok(StepOutcome::Continue),
        }
    }

    fn mask(&mut self, guard: usize, pen: f64) {
        self.states[guard] = GuardState::Masked { pen };
    }
}

struct ProblemRhs<'p>(&'p dyn HybridProblem);

impl OdeRhs for ProblemRhs<'_> {
    fn eval(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()> {
        self.0.rhs(t, y, dy)
    }
}

/// Runs the hybrid flow of `problem` from (t0, y0) to `t_end`.
///
/// When `single_arc` is set the driver stops at the first admissible
/// crossing without applying the impact: the crossing appears as a
/// zero-width event with `y_post == y_pre`.
pub(crate) fn drive(
    problem: &dyn HybridProblem,
    t0: f64,
    y0: DVector<f64>,
    t_end: f64,
    cfg: &NumericsConfig,
    single_arc: bool,
) -> Result<RawFlow> {
    cfg.validate()?;
    if !(t_end > t0) {
        return Err(Error::InvalidParams(format!(
            "t_end {t_end} must exceed start time {t0}"
        )));
    }
    let mut scanner = Scanner::new(problem, t0, &y0, cfg);

    // Starting on a guard with admissible approach is a precondition breach.
    for i in 0..problem.n_guards() {
        let h = problem.guard_h(i, t0, &y0);
        if !h.is_finite() {
            return Err(Error::NonFinite(format!(
                "guard '{}' at the initial state",
                problem.guard_label(i)
            )));
        }
        if h.abs() <= scanner.bands[i] && problem.guard_approach(i, t0, &y0) < 0.0 {
            return Err(Error::GuardViolationAtStart(
                problem.guard_label(i).to_string(),
            ));
        }
    }

    let rhs = ProblemRhs(problem);
    let mut arcs: Vec<FlowArc> = Vec::new();
    let mut events: Vec<RawEvent> = Vec::new();
    let mut t_cur = t0;
    let mut y_cur = y0;
    let mut first_step_cap: Option<f64> = None;
    let time_eps = 1e-14 * t_end.abs().max(1.0);

    let fail = |arcs: Vec<FlowArc>, events: Vec<RawEvent>, msg: String| RawFlow {
        arcs,
        events,
        termination: Termination::IntegrationFailure(msg),
    };

    loop {
        if t_cur >= t_end - time_eps {
            arcs.push(FlowArc {
                samples: vec![(t_end, y_cur.clone())],
                dense: None,
            });
            return Ok(RawFlow {
                arcs,
                events,
                termination: Termination::TimeHorizonReached,
            });
        }

        scanner.begin_arc(t_cur, &y_cur);
        let mut stepper = match Dopri5::new(&rhs, t_cur, y_cur.clone(), t_end, cfg) {
            Ok(s) => s,
            Err(e) => return Ok(fail(arcs, events, e.to_string())),
        };
        if let Some(cap) = first_step_cap.take() {
            stepper.cap_step(cap);
        }
        let mut arc = FlowArc {
            samples: vec![(t_cur, y_cur.clone())],
            dense: Some(DenseOutput::default()),
        };

        'steps: loop {
            let step = match stepper.step() {
                Ok(Some(s)) => s,
                Ok(None) => {
                    arcs.push(arc);
                    return Ok(RawFlow {
                        arcs,
                        events,
                        termination: Termination::TimeHorizonReached,
                    });
                }
                Err(e) => {
                    arcs.push(arc);
                    return Ok(fail(arcs, events, e.to_string()));
                }
            };
            let seg_t0 = step.dense.t0;
            let seg_t1 = step.dense.t_end();
            arc.dense.as_mut().unwrap().segments.push(step.dense);

            let outcome = {
                let dense_ref = arc.dense.as_ref().unwrap();
                match scanner.scan_step(seg_t0, seg_t1, dense_ref) {
                    Ok(o) => o,
                    Err(e) => {
                        arc.samples.push((stepper.t, stepper.y.clone()));
                        arcs.push(arc);
                        return Ok(fail(arcs, events, e.to_string()));
                    }
                }
            };

            match outcome {
                StepOutcome::Continue => {
                    arc.samples.push((stepper.t, stepper.y.clone()));
                }
                StepOutcome::Zeno(tz) => {
                    let yz = arc.dense.as_ref().unwrap().eval(tz).unwrap();
                    arc.samples.push((tz, yz));
                    arcs.push(arc);
                    return Ok(RawFlow {
                        arcs,
                        events,
                        termination: Termination::ZenoDetected,
                    });
                }
                StepOutcome::Crossing(c) => {
                    arc.samples.push((c.t, c.y.clone()));
                    arcs.push(arc);

                    if single_arc {
                        events.push(RawEvent {
                            t: c.t,
                            guard: c.guard,
                            y_pre: c.y.clone(),
                            y_post: c.y,
                        });
                        return Ok(RawFlow {
                            arcs,
                            events,
                            termination: Termination::TimeHorizonReached,
                        });
                    }

                    let y_post = match problem.impact(c.guard, c.t, &c.y) {
                        Ok(y) => y,
                        Err(e) => {
                            return Ok(fail(arcs, events, e.to_string()));
                        }
                    };
                    if y_post.iter().any(|x| !x.is_finite()) {
                        return Ok(fail(
                            arcs,
                            events,
                            format!(
                                "impact on guard '{}' produced a non-finite state",
                                problem.guard_label(c.guard)
                            ),
                        ));
                    }

                    // Penetration side: the side the trajectory was entering.
                    let pen = match scanner.states[c.guard] {
                        GuardState::Armed { conf: Some((_, s)) } => -s,
                        _ => {
                            let h_before =
                                problem.guard_h(c.guard, c.t - 10.0 * time_eps, &c.y);
                            -h_before.signum()
                        }
                    };

                    let gap_violation = events
                        .last()
                        .map(|e| c.t - e.t < cfg.zeno_gap)
                        .unwrap_or(false);
                    events.push(RawEvent {
                        t: c.t,
                        guard: c.guard,
                        y_pre: c.y.clone(),
                        y_post: y_post.clone(),
                    });

                    if gap_violation || events.len() >= cfg.max_impacts {
                        return Ok(RawFlow {
                            arcs,
                            events,
                            termination: Termination::ZenoDetected,
                        });
                    }

                    scanner.mask(c.guard, pen);
                    // Cap the first step after the impact so the departure
                    // from the event band is resolved by the scan.
                    let appr = problem.guard_approach(c.guard, c.t, &y_post);
                    let band = scanner.bands[c.guard];
                    first_step_cap = Some(if appr > APPROACH_REARM {
                        (200.0 * band / appr).clamp(1e-12, 1e-3 * (t_end - c.t).max(1e-9))
                    } else {
                        cfg.zeno_gap
                    });

                    t_cur = c.t;
                    y_cur = y_post;
                    break 'steps;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lagrangian- and Hamiltonian-side problems
// ---------------------------------------------------------------------------

fn pack(q: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    DVector::from_fn(2 * n, |i, _| if i < n { q[i] } else { w[i - n] })
}

fn halves(y: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_fn(n, |i, _| y[i]),
        DVector::from_fn(n, |i, _| y[n + i]),
    )
}

/// Errors that should make the stepper shrink rather than abort: transient
/// non-finite trial states and transiently singular metrics.
fn soften(e: Error, dy: &mut DVector<f64>) -> Result<()> {
    match e {
        Error::NonFinite(_) | Error::SingularMetric { .. } | Error::AsymmetricMass { .. } => {
            dy.fill(f64::NAN);
            Ok(())
        }
        other => Err(other),
    }
}

struct LagrangianProblem<'a> {
    hs: &'a HybridSystem,
    cfg: &'a NumericsConfig,
}

impl HybridProblem for LagrangianProblem<'_> {
    fn rhs(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()> {
        let n = self.hs.sys.dim();
        let (q, v) = halves(y, n);
        let s = TangentState { t, q, v };
        match self.hs.sys.forced_el_field(&s, self.cfg) {
            Ok(d) => {
                for i in 0..n {
                    dy[i] = d.dq[i];
                    dy[n + i] = d.dw[i];
                }
                Ok(())
            }
            Err(e) => soften(e, dy),
        }
    }

    fn n_guards(&self) -> usize {
        self.hs.transitions.len()
    }

    fn guard_label(&self, i: usize) -> &str {
        &self.hs.transitions[i].guard.label
    }

    fn guard_h(&self, i: usize, t: f64, y: &DVector<f64>) -> f64 {
        let n = self.hs.sys.dim();
        let (q, _) = halves(y, n);
        self.hs.transitions[i].guard.h(t, &q)
    }

    fn guard_approach(&self, i: usize, t: f64, y: &DVector<f64>) -> f64 {
        let n = self.hs.sys.dim();
        let (q, v) = halves(y, n);
        self.hs.transitions[i].guard.approach(t, &q, &v)
    }

    fn impact(&self, i: usize, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.hs.sys.dim();
        let (q, v) = halves(y, n);
        let s = TangentState::new(t, q, v)?;
        let tr = &self.hs.transitions[i];
        let post = apply_law(&self.hs.sys, &tr.guard, &tr.law, &s, self.cfg)?;
        Ok(pack(&post.q, &post.v))
    }
}

struct HamiltonianProblem<'a> {
    hs: &'a HybridSystem,
    cfg: &'a NumericsConfig,
}

impl HamiltonianProblem<'_> {
    fn velocity(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.hs.sys.mass_at(t, q).ok()?;
        crate::linalg::spd_solve(&m, p).ok()
    }
}

impl HybridProblem for HamiltonianProblem<'_> {
    fn rhs(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()> {
        let n = self.hs.sys.dim();
        let (q, p) = halves(y, n);
        let s = CotangentState { t, q, p };
        match self.hs.sys.forced_hamiltonian_field(&s, self.cfg) {
            Ok(d) => {
                for i in 0..n {
                    dy[i] = d.dq[i];
                    dy[n + i] = d.dw[i];
                }
                Ok(())
            }
            Err(e) => soften(e, dy),
        }
    }

    fn n_guards(&self) -> usize {
        self.hs.transitions.len()
    }

    fn guard_label(&self, i: usize) -> &str {
        &self.hs.transitions[i].guard.label
    }

    fn guard_h(&self, i: usize, t: f64, y: &DVector<f64>) -> f64 {
        let n = self.hs.sys.dim();
        let (q, _) = halves(y, n);
        self.hs.transitions[i].guard.h(t, &q)
    }

    /// The approach condition on the cotangent side pairs the momentum with
    /// the surface differential through the cometric, which equals the
    /// Lagrangian approach at v = M^-1 p.
    fn guard_approach(&self, i: usize, t: f64, y: &DVector<f64>) -> f64 {
        let n = self.hs.sys.dim();
        let (q, p) = halves(y, n);
        match self.velocity(t, &q, &p) {
            Some(v) => self.hs.transitions[i].guard.approach(t, &q, &v),
            None => f64::NAN,
        }
    }

    fn impact(&self, i: usize, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.hs.sys.dim();
        let (q, p) = halves(y, n);
        let s = CotangentState::new(t, q, p)?;
        let tr = &self.hs.transitions[i];
        let post = apply_law_momentum(&self.hs.sys, &tr.guard, &tr.law, &s, self.cfg)?;
        Ok(pack(&post.q, &post.p))
    }
}

// ---------------------------------------------------------------------------
// Public executors
// ---------------------------------------------------------------------------

fn mu_of_tangent(hs: &HybridSystem, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    match &hs.cyclic {
        Some(cyc) => {
            let s = TangentState {
                t,
                q: q.clone(),
                v: v.clone(),
            };
            momentum_map(&hs.sys, cyc, &s)
                .map(|m| m.0)
                .unwrap_or_else(|_| DVector::zeros(cyc.cyclic_dim()))
        }
        None => DVector::zeros(0),
    }
}

fn mu_of_momentum(hs: &HybridSystem, p: &DVector<f64>) -> DVector<f64> {
    match &hs.cyclic {
        Some(cyc) => cyc.cyclic_part(p),
        None => DVector::zeros(0),
    }
}

fn wrap_events(
    hs: &HybridSystem,
    raw: Vec<RawEvent>,
    side: FlowSide,
) -> Vec<ImpactEvent> {
    let n = hs.sys.dim();
    raw.into_iter()
        .map(|e| {
            let (q, w_pre) = halves(&e.y_pre, n);
            let (_, w_post) = halves(&e.y_post, n);
            let (mu_pre, mu_post) = match side {
                FlowSide::Lagrangian => (
                    mu_of_tangent(hs, e.t, &q, &w_pre),
                    mu_of_tangent(hs, e.t, &q, &w_post),
                ),
                _ => (mu_of_momentum(hs, &w_pre), mu_of_momentum(hs, &w_post)),
            };
            ImpactEvent {
                time: e.t,
                guard_label: hs.transitions[e.guard].guard.label.clone(),
                q,
                w_pre,
                w_post,
                mu_pre,
                mu_post,
            }
        })
        .collect()
}

/// Executes the hybrid flow on the tangent side.
///
/// Integration failures are recorded in the termination field, never raised;
/// errors are reserved for precondition violations.
pub fn run_hybrid_flow(
    hs: &HybridSystem,
    s0: &TangentState,
    t_end: f64,
    cfg: &NumericsConfig,
) -> Result<HybridFlowRecord> {
    sanity_probe_guards(hs, s0.t, &s0.q, cfg)?;
    let problem = LagrangianProblem { hs, cfg };
    let raw = drive(&problem, s0.t, pack(&s0.q, &s0.v), t_end, cfg, false)?;
    Ok(HybridFlowRecord {
        side: FlowSide::Lagrangian,
        dim: hs.sys.dim(),
        arcs: raw.arcs,
        events: wrap_events(hs, raw.events, FlowSide::Lagrangian),
        termination: raw.termination,
    })
}

/// Executes the hybrid flow on the cotangent side, with guards and custom
/// impact laws conjugated through the fiber derivative.
pub fn run_hybrid_flow_hamiltonian(
    hs: &HybridSystem,
    s0: &CotangentState,
    t_end: f64,
    cfg: &NumericsConfig,
) -> Result<HybridFlowRecord> {
    sanity_probe_guards(hs, s0.t, &s0.q, cfg)?;
    let problem = HamiltonianProblem { hs, cfg };
    let raw = drive(&problem, s0.t, pack(&s0.q, &s0.p), t_end, cfg, false)?;
    Ok(HybridFlowRecord {
        side: FlowSide::Hamiltonian,
        dim: hs.sys.dim(),
        arcs: raw.arcs,
        events: wrap_events(hs, raw.events, FlowSide::Hamiltonian),
        termination: raw.termination,
    })
}

fn sanity_probe_guards(
    hs: &HybridSystem,
    t: f64,
    q: &DVector<f64>,
    cfg: &NumericsConfig,
) -> Result<()> {
    for tr in &hs.transitions {
        tr.guard.sanity_probe(t, q, cfg)?;
    }
    Ok(())
}

/// The first admissible crossing found by [`integrate_arc`].
#[derive(Debug, Clone)]
pub struct ArcCrossing {
    pub guard_label: String,
    pub t: f64,
    pub state: TangentState,
}

/// Integrates one continuous arc from `s0` until `t_end` or the first
/// admissible guard crossing, whichever comes first. The impact law is not
/// applied.
pub fn integrate_arc(
    hs: &HybridSystem,
    s0: &TangentState,
    t_end: f64,
    cfg: &NumericsConfig,
) -> Result<(FlowArc, Option<ArcCrossing>)> {
    sanity_probe_guards(hs, s0.t, &s0.q, cfg)?;
    let problem = LagrangianProblem { hs, cfg };
    let raw = drive(&problem, s0.t, pack(&s0.q, &s0.v), t_end, cfg, true)?;
    if let Termination::IntegrationFailure(msg) = &raw.termination {
        return Err(Error::NonFinite(format!("integration failure: {msg}")));
    }
    let n = hs.sys.dim();
    let arc = raw.arcs.into_iter().next().expect("driver returns an arc");
    let crossing = raw.events.into_iter().next().map(|e| {
        let (q, v) = halves(&e.y_pre, n);
        ArcCrossing {
            guard_label: hs.transitions[e.guard].guard.label.clone(),
            t: e.t,
            state: TangentState { t: e.t, q, v },
        }
    });
    Ok((arc, crossing))
}

/// Maps a Hamiltonian-side record through the fiber derivative, producing the
/// conjugate Lagrangian-side record (states mapped sample-wise).
pub fn map_record_to_tangent(
    record: &HybridFlowRecord,
    sys: &MechanicalSystem,
) -> Result<HybridFlowRecord> {
    if record.side != FlowSide::Hamiltonian {
        return Err(Error::InvalidParams(
            "map_record_to_tangent expects a Hamiltonian-side record".into(),
        ));
    }
    let n = record.dim;
    let map_y = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let (q, p) = halves(y, n);
        let s = CotangentState::new(t, q, p)?;
        let tan = sys.legendre_inverse(&s)?;
        Ok(pack(&tan.q, &tan.v))
    };
    let mut arcs = Vec::with_capacity(record.arcs.len());
    for arc in &record.arcs {
        let mut samples = Vec::with_capacity(arc.samples.len());
        for (t, y) in &arc.samples {
            samples.push((*t, map_y(*t, y)?));
        }
        arcs.push(FlowArc {
            samples,
            dense: None,
        });
    }
    let mut events = Vec::with_capacity(record.events.len());
    for e in &record.events {
        let pre = map_y(e.time, &pack(&e.q, &e.w_pre))?;
        let post = map_y(e.time, &pack(&e.q, &e.w_post))?;
        let (q, v_pre) = halves(&pre, n);
        let (_, v_post) = halves(&post, n);
        events.push(ImpactEvent {
            time: e.time,
            guard_label: e.guard_label.clone(),
            q,
            w_pre: v_pre,
            w_post: v_post,
            mu_pre: e.mu_pre.clone(),
            mu_post: e.mu_post.clone(),
        });
    }
    Ok(HybridFlowRecord {
        side: FlowSide::Lagrangian,
        dim: n,
        arcs,
        events,
        termination: record.termination.clone(),
    })
}

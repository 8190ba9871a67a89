//! Scenario orchestration: build the model, run the requested pipelines,
//! export artifacts, and map outcomes to exit codes.

use crate::export;
use crate::scenario::{Chart, Mode, Scenario};
use hybrid_mech::classify::classify_momentum_map;
use hybrid_mech::models::ModelBundle;
use hybrid_mech::reduced::{reconstruct, run_reduced_hybrid_flow, ReducedFlowRecord};
use hybrid_mech::symcheck::check_symmetry;
use hybrid_mech::{
    run_hybrid_flow, HybridFlowRecord, TangentState, Termination,
};
use nalgebra::DVector;
use std::path::{Path, PathBuf};

/// Exit status and diagnostics of one scenario run.
#[derive(Debug)]
pub struct RunOutcome {
    /// 0 success, 3 simulation failure, 4 Zeno-terminated (partial outputs).
    pub exit_code: i32,
    pub warnings: Vec<String>,
    pub summary: Vec<String>,
}

#[derive(Debug)]
pub enum RunError {
    Setup(String),
    Simulation(String),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Setup(m) => write!(f, "setup error: {m}"),
            RunError::Simulation(m) => write!(f, "simulation error: {m}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn setup_err(e: impl std::fmt::Display) -> RunError {
    RunError::Setup(e.to_string())
}

fn sim_err(e: impl std::fmt::Display) -> RunError {
    RunError::Simulation(e.to_string())
}

const EXPORT_GRID: usize = 2000;

fn termination_str(t: &Termination) -> String {
    match t {
        Termination::TimeHorizonReached => "time_horizon_reached".into(),
        Termination::ZenoDetected => "zeno_detected".into(),
        Termination::IntegrationFailure(m) => format!("integration_failure: {m}"),
    }
}

fn exit_code_for(t: &Termination) -> i32 {
    match t {
        Termination::TimeHorizonReached => 0,
        Termination::ZenoDetected => 4,
        Termination::IntegrationFailure(_) => 3,
    }
}

fn out(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".into());
    name.push('_');
    name.push_str(suffix);
    prefix.with_file_name(name)
}

struct Prepared {
    bundle: ModelBundle,
    cart0: TangentState,
    polar0: TangentState,
}

fn prepare(sc: &Scenario) -> Result<Prepared, RunError> {
    let bundle = sc.build_model().map_err(setup_err)?;
    let init = TangentState::from_slices(sc.t0, &sc.init_q, &sc.init_v).map_err(setup_err)?;
    let (cart0, polar0) = match sc.init_chart {
        Chart::Cartesian => {
            let polar = (bundle.to_polar)(&init).map_err(setup_err)?;
            (init, polar)
        }
        Chart::Polar => {
            let cart = (bundle.to_cartesian)(&init).map_err(setup_err)?;
            (cart, init)
        }
    };
    Ok(Prepared {
        bundle,
        cart0,
        polar0,
    })
}

fn horizon_warnings(sc: &Scenario) -> Result<Vec<String>, RunError> {
    match sc.model_name.as_str() {
        "billiard" => sc.billiard.probe_horizon(sc.t0, sc.t_end).map_err(setup_err),
        _ => {
            sc.disk.probe_horizon(sc.t0, sc.t_end).map_err(setup_err)?;
            Ok(Vec::new())
        }
    }
}

fn export_full(
    sc: &Scenario,
    bundle: &ModelBundle,
    record: &HybridFlowRecord,
) -> Result<(), RunError> {
    let labels = bundle.cartesian.sys.labels().to_vec();
    let rows = export::sample_rows(record, EXPORT_GRID);
    export::write_trajectory_csv(&out(&sc.out_prefix, "trajectory.csv"), &labels, "v", &rows)?;
    export::write_events_csv(&out(&sc.out_prefix, "events.csv"), &labels, record)?;

    // Per-arc momentum values from the Cartesian momentum map.
    let mut spans = Vec::new();
    let mut momenta = Vec::new();
    for arc in &record.arcs {
        let (t, y) = arc.start();
        if let Ok(s) = record.tangent_state(*t, y) {
            spans.push((arc.t_start(), arc.t_end()));
            momenta.push((bundle.cartesian_momentum)(&s));
        }
    }
    export::write_momenta_csv(&out(&sc.out_prefix, "momenta.csv"), &spans, &momenta)?;

    let xy: Vec<(f64, f64)> = rows.iter().map(|r| (r.y[0], r.y[1])).collect();
    export::write_pairs(&out(&sc.out_prefix, "path_xy.dat"), &xy)?;
    let times: Vec<f64> = record.events.iter().map(|e| e.time).collect();
    export::write_impact_times(&out(&sc.out_prefix, "impacts.dat"), &times)?;
    Ok(())
}

fn export_reduced(
    sc: &Scenario,
    bundle: &ModelBundle,
    record: &ReducedFlowRecord,
) -> Result<(), RunError> {
    let cyc = bundle.polar.cyclic.as_ref().expect("models declare cyclic");
    let all = bundle.polar.sys.labels();
    let shape_labels: Vec<String> = cyc.shape_indices().iter().map(|&i| all[i].clone()).collect();
    let cyclic_labels: Vec<String> =
        cyc.cyclic_indices().iter().map(|&i| all[i].clone()).collect();
    let rows = export::sample_rows_reduced(record, EXPORT_GRID);
    export::write_reduced_csv(
        &out(&sc.out_prefix, "reduced.csv"),
        &shape_labels,
        &cyclic_labels,
        &rows,
    )?;
    let spans: Vec<(f64, f64)> = record
        .arcs
        .iter()
        .map(|a| (a.t_start(), a.t_end()))
        .collect();
    let momenta: Vec<DVector<f64>> = record
        .mu_sequence
        .iter()
        .take(spans.len())
        .map(|m| m.0.clone())
        .collect();
    export::write_momenta_csv(&out(&sc.out_prefix, "momenta_reduced.csv"), &spans, &momenta)?;
    let tr: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.y[0])).collect();
    export::write_pairs(&out(&sc.out_prefix, "reduced_r.dat"), &tr)?;
    let times: Vec<f64> = record.events.iter().map(|e| e.time).collect();
    export::write_impact_times(&out(&sc.out_prefix, "impacts_reduced.dat"), &times)?;
    Ok(())
}

/// Full-versus-reduced comparison metrics behind the `both` mode.
pub struct Comparison {
    pub max_guard_residual: f64,
    pub momentum_spread_rel: f64,
    pub max_radius_deviation: f64,
    pub max_reconstruction_q_deviation: f64,
    pub max_reconstruction_v_deviation: f64,
}

/// Computes the comparison metrics between a full Cartesian record, a
/// reduced record and its reconstruction.
pub fn compare_records(
    bundle: &ModelBundle,
    full: &HybridFlowRecord,
    red: &ReducedFlowRecord,
    reconstructed: &[TangentState],
) -> Result<Comparison, hybrid_mech::Error> {
    // Guard residual at every full-record event.
    let mut max_guard_residual: f64 = 0.0;
    for e in &full.events {
        let tr = bundle.cartesian.transition(&e.guard_label)?;
        max_guard_residual = max_guard_residual.max(tr.guard.h(e.time, &e.q).abs());
    }

    // Momentum over the whole run on a uniform grid.
    let (t0, t1) = (full.t_start(), full.t_end());
    let mut mu_min: Option<DVector<f64>> = None;
    let mut mu_max: Option<DVector<f64>> = None;
    for k in 0..=EXPORT_GRID {
        let t = t0 + (t1 - t0) * k as f64 / EXPORT_GRID as f64;
        let Some(y) = full.eval(t) else { continue };
        let s = full.tangent_state(t, &y)?;
        let mu = (bundle.cartesian_momentum)(&s);
        mu_min = Some(match mu_min {
            None => mu.clone(),
            Some(m) => m.zip_map(&mu, f64::min),
        });
        mu_max = Some(match mu_max {
            None => mu,
            Some(m) => m.zip_map(&mu, f64::max),
        });
    }
    let momentum_spread_rel = match (mu_min, mu_max) {
        (Some(lo), Some(hi)) => (0..lo.len())
            .map(|i| (hi[i] - lo[i]) / hi[i].abs().max(lo[i].abs()).max(1.0))
            .fold(0.0f64, f64::max),
        _ => f64::NAN,
    };

    // Radius deviation between the full run and the reduced shape coordinate.
    let mut max_radius_deviation: f64 = 0.0;
    let t1r = red.t_end().min(t1);
    for k in 0..=EXPORT_GRID {
        let t = t0 + (t1r - t0) * k as f64 / EXPORT_GRID as f64;
        let (Some(yf), Some(arc)) = (
            full.eval(t),
            red.arcs.iter().find(|a| t <= a.t_end()).or(red.arcs.last()),
        ) else {
            continue;
        };
        let Some(yr) = arc.eval(t) else { continue };
        let r_full = yf[0].hypot(yf[1]);
        max_radius_deviation = max_radius_deviation.max((r_full - yr[0]).abs());
    }

    // Reconstruction against the full run, velocities compared away from the
    // (slightly skewed) impact times.
    let mut max_q: f64 = 0.0;
    let mut max_v: f64 = 0.0;
    for s in reconstructed {
        if s.t > t1 {
            continue;
        }
        let cart = (bundle.to_cartesian)(s)?;
        let Some(yf) = full.eval(s.t) else { continue };
        let (qf, vf) = full.split(&yf);
        let near_event = full.events.iter().any(|e| (s.t - e.time).abs() < 1e-6);
        if !near_event {
            max_q = max_q.max((&cart.q - &qf).norm());
            max_v = max_v.max((&cart.v - &vf).norm());
        }
    }

    Ok(Comparison {
        max_guard_residual,
        momentum_spread_rel,
        max_radius_deviation,
        max_reconstruction_q_deviation: max_q,
        max_reconstruction_v_deviation: max_v,
    })
}

/// Runs a scenario, writing all artifacts under its output prefix.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutcome, RunError> {
    let warnings = horizon_warnings(sc)?;
    let prepared = prepare(sc)?;
    let bundle = &prepared.bundle;
    let mut summary = vec![
        format!("model: {}", sc.model_name),
        format!("mode: {}", sc.mode.as_str()),
        format!("t0: {}", sc.t0),
        format!("t_end: {}", sc.t_end),
    ];
    let mut exit_code = 0;

    match sc.mode {
        Mode::Full => {
            let record = run_hybrid_flow(&bundle.cartesian, &prepared.cart0, sc.t_end, &sc.numerics)
                .map_err(sim_err)?;
            export_full(sc, bundle, &record)?;
            summary.push(format!("termination: {}", termination_str(&record.termination)));
            summary.push(format!("impacts: {}", record.events.len()));
            exit_code = exit_code_for(&record.termination);
        }
        Mode::Reduced => {
            let record =
                run_reduced_hybrid_flow(&bundle.polar, &prepared.polar0, sc.t_end, &sc.numerics)
                    .map_err(sim_err)?;
            export_reduced(sc, bundle, &record)?;
            summary.push(format!("termination: {}", termination_str(&record.termination)));
            summary.push(format!("impacts: {}", record.events.len()));
            exit_code = exit_code_for(&record.termination);
        }
        Mode::Both => {
            let full = run_hybrid_flow(&bundle.cartesian, &prepared.cart0, sc.t_end, &sc.numerics)
                .map_err(sim_err)?;
            let red =
                run_reduced_hybrid_flow(&bundle.polar, &prepared.polar0, sc.t_end, &sc.numerics)
                    .map_err(sim_err)?;
            export_full(sc, bundle, &full)?;
            export_reduced(sc, bundle, &red)?;

            let cyc = bundle.polar.cyclic.as_ref().expect("models declare cyclic");
            let theta0 = cyc.cyclic_part(&prepared.polar0.q);
            let reconstructed =
                reconstruct(&bundle.polar.sys, cyc, &red, &theta0).map_err(sim_err)?;
            let xy: Vec<(f64, f64)> = reconstructed
                .iter()
                .filter_map(|s| (bundle.to_cartesian)(s).ok().map(|c| (c.q[0], c.q[1])))
                .collect();
            export::write_pairs(&out(&sc.out_prefix, "reconstructed_xy.dat"), &xy)?;

            let cmp = compare_records(bundle, &full, &red, &reconstructed).map_err(sim_err)?;
            let report = vec![
                format!("model: {}", sc.model_name),
                format!("t0: {}", sc.t0),
                format!("t_end: {}", sc.t_end),
                format!("termination_full: {}", termination_str(&full.termination)),
                format!("termination_reduced: {}", termination_str(&red.termination)),
                format!("impacts_full: {}", full.events.len()),
                format!("impacts_reduced: {}", red.events.len()),
                format!("max_guard_residual: {:e}", cmp.max_guard_residual),
                format!("momentum_spread_rel: {:e}", cmp.momentum_spread_rel),
                format!("max_radius_deviation: {:e}", cmp.max_radius_deviation),
                format!(
                    "max_reconstruction_q_deviation: {:e}",
                    cmp.max_reconstruction_q_deviation
                ),
                format!(
                    "max_reconstruction_v_deviation: {:e}",
                    cmp.max_reconstruction_v_deviation
                ),
            ];
            export::write_report(&out(&sc.out_prefix, "comparison.txt"), &report)?;
            summary.extend(report.into_iter().skip(3));
            exit_code = exit_code_for(&full.termination).max(exit_code_for(&red.termination));
        }
        Mode::Classify => {
            let record = run_hybrid_flow(&bundle.polar, &prepared.polar0, sc.t_end, &sc.numerics)
                .map_err(sim_err)?;
            if record.events.is_empty() {
                return Err(RunError::Simulation(
                    "classification needs at least one impact on the horizon".into(),
                ));
            }
            let report = classify_momentum_map(&bundle.polar, &record, &bundle.probes, &sc.numerics)
                .map_err(sim_err)?;
            let labels = bundle.polar.sys.labels().to_vec();
            export::write_events_csv(&out(&sc.out_prefix, "events.csv"), &labels, &record)?;
            let mut lines = vec![
                format!("model: {}", sc.model_name),
                format!("verdict: {}", report.verdict),
                format!("events: {}", record.events.len()),
                format!(
                    "max_preservation_violation: {:e}",
                    report.max_preservation_violation
                ),
                format!("max_level_violation: {:e}", report.max_level_violation),
                format!("levels_probed: {}", report.levels_probed),
                format!("probes_per_level: {}", report.probes_per_level),
            ];
            for (i, (pre, post)) in report.event_momenta.iter().enumerate() {
                lines.push(format!(
                    "event_{i}: mu_pre = {:?} mu_post = {:?}",
                    pre.as_slice(),
                    post.as_slice()
                ));
            }
            export::write_report(&out(&sc.out_prefix, "classification.txt"), &lines)?;
            summary.push(format!("verdict: {}", report.verdict));
            exit_code = exit_code_for(&record.termination);
        }
        Mode::Symcheck => {
            // Residuals at seeded sample states around the initial condition,
            // drift along an arc integrated from it.
            let sys = &bundle.cartesian.sys;
            let n = sys.dim();
            let mut rng_state = sc.seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = move || {
                rng_state ^= rng_state << 13;
                rng_state ^= rng_state >> 7;
                rng_state ^= rng_state << 17;
                (rng_state >> 11) as f64 / (1u64 << 53) as f64
            };
            let mut samples = Vec::new();
            for _ in 0..32 {
                let q = DVector::from_fn(n, |i, _| {
                    prepared.cart0.q[i] + 0.8 * (next() - 0.5)
                });
                let v = DVector::from_fn(n, |i, _| {
                    prepared.cart0.v[i] + 0.8 * (next() - 0.5)
                });
                samples.push(TangentState::new(sc.t0, q, v).map_err(sim_err)?);
            }
            let horizon = (sc.t_end - sc.t0).min(1.0);
            let mut lines = vec![format!("model: {}", sc.model_name)];
            for (name, gen) in &bundle.symmetry_generators {
                let report = check_symmetry(
                    sys,
                    gen.as_ref(),
                    &samples,
                    &prepared.cart0,
                    horizon,
                    &sc.numerics,
                )
                .map_err(sim_err)?;
                lines.push(format!(
                    "generator: {name} max_residual: {:e} max_drift: {:e} samples: {} horizon: {}",
                    report.max_residual, report.max_drift, report.samples, report.horizon
                ));
                summary.push(format!(
                    "{name}: residual {:.3e}, drift {:.3e}",
                    report.max_residual, report.max_drift
                ));
            }
            export::write_report(&out(&sc.out_prefix, "symmetry.txt"), &lines)?;
        }
    }

    Ok(RunOutcome {
        exit_code,
        warnings,
        summary,
    })
}

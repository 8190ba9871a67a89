//! Symmetry checks for forced mechanical systems.
//!
//! A vector field X on Q is a symmetry of the forced Lagrangian when
//! X^c(L) = F(X^c), with X^c the complete lift; equivalently the vertical
//! pairing X^v(L) = dL/dv . X is a constant of the motion. The check
//! evaluates the residual at sample states and monitors the conserved
//! pairing along a short integrated arc.

use crate::config::NumericsConfig;
use crate::error::Result;
use crate::mech::MechanicalSystem;
use crate::ode::integrate;
use crate::state::TangentState;
use nalgebra::{DMatrix, DVector};

/// Residual and conservation report of [`check_symmetry`].
#[derive(Debug, Clone)]
pub struct SymmetryReport {
    /// max |X^c(L) - F(X^c)| over the sample states.
    pub max_residual: f64,
    /// max |X^v(L) - X^v(L)(0)| along the monitored arc.
    pub max_drift: f64,
    pub samples: usize,
    pub horizon: f64,
}

/// Jacobian of the generator by central differences.
fn generator_jacobian(
    x_field: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    q: &DVector<f64>,
    cfg: &NumericsConfig,
) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = cfg.fd(q[j]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        let xp = x_field(&qp);
        let xm = x_field(&qm);
        for i in 0..n {
            jac[(i, j)] = (xp[i] - xm[i]) / (2.0 * h);
        }
    }
    jac
}

/// The conserved pairing X^v(L) = (M v) . X(q).
pub fn vertical_pairing(
    sys: &MechanicalSystem,
    x_field: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    s: &TangentState,
) -> Result<f64> {
    let p = sys.legendre_forward(s)?.p;
    Ok(p.dot(&x_field(&s.q)))
}

/// Evaluates the symmetry residual X^c(L) - F(X^c) at the given samples and
/// monitors X^v(L) along an arc integrated from `arc_start` over `horizon`.
pub fn check_symmetry(
    sys: &MechanicalSystem,
    x_field: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    samples: &[TangentState],
    arc_start: &TangentState,
    horizon: f64,
    cfg: &NumericsConfig,
) -> Result<SymmetryReport> {
    let n = sys.dim();
    let mut max_residual: f64 = 0.0;
    for s in samples {
        let x = x_field(&s.q);
        let jac = generator_jacobian(x_field, &s.q, cfg);
        let dl_dq = sys.lagrangian_dq(s.t, &s.q, &s.v, cfg)?;
        let dl_dv = sys.legendre_forward(s)?.p;
        let lifted_v = &jac * &s.v; // velocity components of the complete lift
        let force = sys.force_at(s.t, &s.q, &s.v)?;
        let residual = dl_dq.dot(&x) + dl_dv.dot(&lifted_v) - force.dot(&x);
        max_residual = max_residual.max(residual.abs());
    }

    // Monitor the pairing along one integrated arc.
    let rhs = |t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<()> {
        let q = DVector::from_fn(n, |i, _| y[i]);
        let v = DVector::from_fn(n, |i, _| y[n + i]);
        let s = TangentState { t, q, v };
        let d = sys.forced_el_field(&s, cfg)?;
        for i in 0..n {
            dy[i] = d.dq[i];
            dy[n + i] = d.dw[i];
        }
        Ok(())
    };
    let y0 = DVector::from_fn(2 * n, |i, _| {
        if i < n {
            arc_start.q[i]
        } else {
            arc_start.v[i - n]
        }
    });
    let (dense, _) = integrate(&rhs, arc_start.t, y0, arc_start.t + horizon, cfg)?;
    let c0 = vertical_pairing(sys, x_field, arc_start)?;
    let mut max_drift: f64 = 0.0;
    let grid = 200;
    for k in 0..=grid {
        let t = arc_start.t + horizon * k as f64 / grid as f64;
        if let Some(y) = dense.eval(t) {
            let q = DVector::from_fn(n, |i, _| y[i]);
            let v = DVector::from_fn(n, |i, _| y[n + i]);
            let c = vertical_pairing(sys, x_field, &TangentState { t, q, v })?;
            max_drift = max_drift.max((c - c0).abs());
        }
    }

    Ok(SymmetryReport {
        max_residual,
        max_drift,
        samples: samples.len(),
        horizon,
    })
}

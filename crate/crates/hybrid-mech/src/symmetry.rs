//! Cyclic coordinates, momentum maps and Routh reduction with external
//! forces.
//!
//! Group actions are translations in a block of cyclic coordinates (products
//! of circle and line factors acting on the configuration). With the flat
//! connection the Routhian is the classical one,
//!   R_mu(t, x, xdot) = [L - mu . thetadot] with thetadot eliminated through
//!   the momentum relation mu = M_thetax xdot + M_theta thetadot,
//! and the reduced dynamics is again a forced mechanical system on shape
//! space (plus a gyroscopic force when the cross block M_thetax is nonzero).

use crate::config::NumericsConfig;
use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::mech::{AnalyticDerivatives, MechanicalSystem};
use crate::state::{StateDerivative, TangentState};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Partition of the configuration indices into a cyclic block and its
/// complement (the shape block).
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicStructure {
    cyclic: Vec<usize>,
    shape: Vec<usize>,
    n: usize,
}

impl CyclicStructure {
    pub fn new(n: usize, cyclic_indices: &[usize]) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in cyclic_indices {
            if i >= n {
                return Err(Error::InvalidParams(format!(
                    "cyclic index {i} out of range for dimension {n}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidParams(format!("duplicate cyclic index {i}")));
            }
            seen[i] = true;
        }
        if cyclic_indices.is_empty() || cyclic_indices.len() == n {
            return Err(Error::InvalidParams(
                "cyclic block must be a proper nonempty subset of the coordinates".into(),
            ));
        }
        let shape = (0..n).filter(|i| !seen[*i]).collect();
        Ok(Self {
            cyclic: cyclic_indices.to_vec(),
            shape,
            n,
        })
    }

    pub fn cyclic_indices(&self) -> &[usize] {
        &self.cyclic
    }

    pub fn shape_indices(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cyclic_dim(&self) -> usize {
        self.cyclic.len()
    }

    pub fn shape_dim(&self) -> usize {
        self.shape.len()
    }

    /// Gathers the shape block of a full vector.
    pub fn shape_part(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.shape.len(), |i, _| full[self.shape[i]])
    }

    /// Gathers the cyclic block of a full vector.
    pub fn cyclic_part(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.cyclic.len(), |i, _| full[self.cyclic[i]])
    }

    /// Scatters shape and cyclic blocks back into a full vector.
    pub fn assemble(&self, shape: &DVector<f64>, cyclic: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n);
        for (i, &k) in self.shape.iter().enumerate() {
            full[k] = shape[i];
        }
        for (i, &k) in self.cyclic.iter().enumerate() {
            full[k] = cyclic[i];
        }
        full
    }

    /// Block extraction from a full mass matrix: (M_x, M_thetax, M_theta).
    pub fn mass_blocks(&self, m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let s = &self.shape;
        let c = &self.cyclic;
        let m_x = DMatrix::from_fn(s.len(), s.len(), |i, j| m[(s[i], s[j])]);
        let m_cx = DMatrix::from_fn(c.len(), s.len(), |i, j| m[(c[i], s[j])]);
        let m_c = DMatrix::from_fn(c.len(), c.len(), |i, j| m[(c[i], c[j])]);
        (m_x, m_cx, m_c)
    }

    /// Probes that L and F are numerically independent of the cyclic block
    /// and that F has no components along cyclic directions.
    pub fn validate_for(&self, sys: &MechanicalSystem, cfg: &NumericsConfig) -> Result<()> {
        if sys.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: sys.dim(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC1C11C);
        for _ in 0..16 {
            let t = rng.random_range(0.0..2.0);
            let q = DVector::from_fn(self.n, |_, _| rng.random_range(0.3..1.7));
            let v = DVector::from_fn(self.n, |_, _| rng.random_range(-1.5..1.5));
            let s = TangentState::new(t, q.clone(), v.clone())?;
            let l0 = sys.lagrangian(&s)?;
            let f0 = sys.force_at(t, &q, &v)?;
            for &k in &self.cyclic {
                if f0[k].abs() > 1e-9 * f0.norm().max(1.0) {
                    return Err(Error::NotCyclic(
                        self.cyclic.clone(),
                        format!("force has a component {} along cyclic coordinate {k}", f0[k]),
                    ));
                }
                let mut qp = q.clone();
                qp[k] += 0.37; // finite translation along the cyclic direction
                let sp = TangentState::new(t, qp.clone(), v.clone())?;
                let l1 = sys.lagrangian(&sp)?;
                if (l1 - l0).abs() > 1e-9 * l0.abs().max(1.0) {
                    return Err(Error::NotCyclic(
                        self.cyclic.clone(),
                        format!("Lagrangian varies by {} along coordinate {k}", l1 - l0),
                    ));
                }
                let f1 = sys.force_at(t, &qp, &v)?;
                if (&f1 - &f0).norm() > 1e-9 * f0.norm().max(1.0) {
                    return Err(Error::NotCyclic(
                        self.cyclic.clone(),
                        format!("force varies along coordinate {k}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A value of the momentum map, one entry per cyclic coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumValue(pub DVector<f64>);

impl MomentumValue {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Momentum map for the cyclic block: the cyclic components of p = M(t,q) v.
pub fn momentum_map(
    sys: &MechanicalSystem,
    cyc: &CyclicStructure,
    s: &TangentState,
) -> Result<MomentumValue> {
    let p = sys.legendre_forward(s)?.p;
    Ok(MomentumValue(cyc.cyclic_part(&p)))
}

/// Shape-space dynamics induced by a momentum level: the Routhian system.
///
/// Internally a forced mechanical system on the shape block with
///   mass      M_x - M_thetax' M_theta^-1 M_thetax   (Schur complement),
///   potential V + 1/2 mu' M_theta^-1 mu,
///   force     F_mu + gyroscopic term of A = M_thetax' M_theta^-1 mu.
#[derive(Clone)]
pub struct ReducedSystem {
    full: Arc<MechanicalSystem>,
    cyc: CyclicStructure,
    mu: MomentumValue,
    shape_sys: MechanicalSystem,
}

impl std::fmt::Debug for ReducedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedSystem")
            .field("mu", &self.mu)
            .field("shape_dim", &self.cyc.shape_dim())
            .finish()
    }
}

fn lift_config(cyc: &CyclicStructure, x: &DVector<f64>) -> DVector<f64> {
    // Cyclic values are irrelevant for evaluating M, V, F by cyclicity.
    cyc.assemble(x, &DVector::zeros(cyc.cyclic_dim()))
}

/// theta-dot from the momentum relation mu = M_thetax xdot + M_theta thetadot.
fn cyclic_rates(
    full: &MechanicalSystem,
    cyc: &CyclicStructure,
    mu: &MomentumValue,
    t: f64,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = lift_config(cyc, x);
    let m = full.mass_at(t, &q)?;
    let (_, m_cx, m_c) = cyc.mass_blocks(&m);
    spd_solve(&m_c, &(&mu.0 - &m_cx * xdot))
        .map_err(|_| Error::Regularity("cyclic mass block M_theta is singular".into()))
}

/// Routh reduction at a fixed momentum level.
pub fn routh_reduce(
    sys: &MechanicalSystem,
    cyc: &CyclicStructure,
    mu: &MomentumValue,
) -> Result<ReducedSystem> {
    if mu.dim() != cyc.cyclic_dim() {
        return Err(Error::DimensionMismatch {
            expected: cyc.cyclic_dim(),
            got: mu.dim(),
        });
    }
    if sys.dim() != cyc.dim() {
        return Err(Error::DimensionMismatch {
            expected: cyc.dim(),
            got: sys.dim(),
        });
    }
    let full = Arc::new(sys.clone());
    let ns = cyc.shape_dim();

    // Shape metric: Schur complement of M_theta.
    let mass = {
        let full = full.clone();
        let cyc = cyc.clone();
        Arc::new(move |t: f64, x: &DVector<f64>| {
            let ns = cyc.shape_dim();
            let q = lift_config(&cyc, x);
            let Ok(m) = full.mass_at(t, &q) else {
                return DMatrix::from_element(ns, ns, f64::NAN);
            };
            let (m_x, m_cx, m_c) = cyc.mass_blocks(&m);
            match m_c.clone().cholesky() {
                Some(ch) => {
                    let w = ch.solve(&m_cx);
                    &m_x - m_cx.transpose() * w
                }
                None => DMatrix::from_element(ns, ns, f64::NAN),
            }
        })
    };

    // Effective potential: V + 1/2 mu' M_theta^-1 mu.
    let potential = {
        let full = full.clone();
        let cyc = cyc.clone();
        let mu = mu.clone();
        Arc::new(move |t: f64, x: &DVector<f64>| {
            let q = lift_config(&cyc, x);
            let v = full.potential_at(t, &q).unwrap_or(f64::NAN);
            let m = match full.mass_at(t, &q) {
                Ok(m) => m,
                Err(_) => return f64::NAN,
            };
            let (_, _, m_c) = cyc.mass_blocks(&m);
            match spd_solve(&m_c, &mu.0) {
                Ok(minv_mu) => v + 0.5 * mu.0.dot(&minv_mu),
                Err(_) => f64::NAN,
            }
        })
    };

    // Total shape force: reduced external force plus the gyroscopic term of
    // the linear-in-velocity part of the Routhian.
    let force = {
        let full = full.clone();
        let cyc = cyc.clone();
        let mu = mu.clone();
        Arc::new(move |t: f64, x: &DVector<f64>, xdot: &DVector<f64>| {
            let f_mu = reduced_force_inner(&full, &cyc, &mu, t, x, xdot)
                .unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN));
            let g = gyroscopic_force(&full, &cyc, &mu, t, x, xdot)
                .unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN));
            f_mu + g
        })
    };

    let labels = cyc
        .shape_indices()
        .iter()
        .map(|&i| sys.labels()[i].clone())
        .collect();

    let mut shape_sys = MechanicalSystem::new(ns, mass, potential, force, labels)?
        .with_time_dependence(sys.is_time_dependent());

    if sys.has_analytic_derivatives() {
        shape_sys = shape_sys.with_analytic(reduced_analytic(&full, cyc, mu));
    }

    Ok(ReducedSystem {
        full,
        cyc: cyc.clone(),
        mu: mu.clone(),
        shape_sys,
    })
}

/// F_mu: shape components of F evaluated with thetadot eliminated.
fn reduced_force_inner(
    full: &MechanicalSystem,
    cyc: &CyclicStructure,
    mu: &MomentumValue,
    t: f64,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let thetadot = cyclic_rates(full, cyc, mu, t, x, xdot)?;
    let q = lift_config(cyc, x);
    let v = cyc.assemble(xdot, &thetadot);
    let f = full.force_at(t, &q, &v)?;
    Ok(cyc.shape_part(&f))
}

/// A(t, x) = M_thetax' M_theta^-1 mu.
fn vector_potential(
    full: &MechanicalSystem,
    cyc: &CyclicStructure,
    mu: &MomentumValue,
    t: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = lift_config(cyc, x);
    let m = full.mass_at(t, &q)?;
    let (_, m_cx, m_c) = cyc.mass_blocks(&m);
    let minv_mu = spd_solve(&m_c, &mu.0)?;
    Ok(m_cx.transpose() * minv_mu)
}

/// Euler-Lagrange contribution of the A . xdot term, folded into the force:
/// G_i = dA_i/dt + sum_j (dA_i/dx_j - dA_j/dx_i) xdot_j.
fn gyroscopic_force(
    full: &MechanicalSystem,
    cyc: &CyclicStructure,
    mu: &MomentumValue,
    t: f64,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ns = x.len();
    let fd = 1e-6;
    let mut jac = DMatrix::zeros(ns, ns); // jac[(i, j)] = dA_i/dx_j
    for j in 0..ns {
        let h = fd * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let ap = vector_potential(full, cyc, mu, t, &xp)?;
        let am = vector_potential(full, cyc, mu, t, &xm)?;
        for i in 0..ns {
            jac[(i, j)] = (ap[i] - am[i]) / (2.0 * h);
        }
    }
    let dt_part = if full.is_time_dependent() {
        let h = fd * t.abs().max(1.0);
        (vector_potential(full, cyc, mu, t + h, x)? - vector_potential(full, cyc, mu, t - h, x)?)
            / (2.0 * h)
    } else {
        DVector::zeros(ns)
    };
    let mut g = dt_part;
    for i in 0..ns {
        for j in 0..ns {
            g[i] += (jac[(i, j)] - jac[(j, i)]) * xdot[j];
        }
    }
    Ok(g)
}

/// Analytic derivatives of the reduced blocks assembled from the full
/// system's analytic derivatives via the block calculus of the Schur
/// complement and of M_theta^-1.
fn reduced_analytic(
    full: &Arc<MechanicalSystem>,
    cyc: &CyclicStructure,
    mu: &MomentumValue,
) -> AnalyticDerivatives {
    let cfg = NumericsConfig::default();

    // On evaluation failure every closure returns NaN fills: the caller's
    // non-finite checks turn them into rejected trial steps.
    let schur_derivative = |m: &DMatrix<f64>, dm: &DMatrix<f64>, cyc: &CyclicStructure| {
        let (_, m_cx, m_c) = cyc.mass_blocks(m);
        let (dm_x, dm_cx, dm_c) = cyc.mass_blocks(dm);
        match m_c.cholesky() {
            Some(ch) => {
                let w = ch.solve(&m_cx);
                let dw = ch.solve(&(&dm_cx - &dm_c * &w));
                &dm_x - dm_cx.transpose() * &w - m_cx.transpose() * dw
            }
            None => DMatrix::from_element(dm_x.nrows(), dm_x.ncols(), f64::NAN),
        }
    };

    let mass_dq = {
        let full = full.clone();
        let cyc = cyc.clone();
        let cfg = cfg.clone();
        Arc::new(move |t: f64, x: &DVector<f64>| {
            let ns = cyc.shape_dim();
            let q = lift_config(&cyc, x);
            let nan = || vec![DMatrix::from_element(ns, ns, f64::NAN); ns];
            let (Ok(m), Ok(grads)) = (full.mass_at(t, &q), full.mass_dq(t, &q, &cfg)) else {
                return nan();
            };
            cyc.shape_indices()
                .iter()
                .map(|&k| schur_derivative(&m, &grads[k], &cyc))
                .collect::<Vec<_>>()
        })
    };

    let mass_dt = {
        let full = full.clone();
        let cyc = cyc.clone();
        let cfg = cfg.clone();
        Arc::new(move |t: f64, x: &DVector<f64>| {
            let ns = cyc.shape_dim();
            let q = lift_config(&cyc, x);
            let (Ok(m), Ok(dm)) = (full.mass_at(t, &q), full.mass_dt(t, &q, &cfg)) else {
                return DMatrix::from_element(ns, ns, f64::NAN);
            };
            schur_derivative(&m, &dm, &cyc)
        })
    };

    let potential_dq = {
        let full = full.clone();
        let cyc = cyc.clone();
        let mu = mu.clone();
        let cfg = cfg.clone();
        Arc::new(move |t: f64, x: &DVector<f64>| {
            let ns = cyc.shape_dim();
            let q = lift_config(&cyc, x);
            let nan = || DVector::from_element(ns, f64::NAN);
            let (Ok(m), Ok(grads), Ok(vq)) = (
                full.mass_at(t, &q),
                full.mass_dq(t, &q, &cfg),
                full.potential_dq(t, &q, &cfg),
            ) else {
                return nan();
            };
            let (_, _, m_c) = cyc.mass_blocks(&m);
            let Some(ch) = m_c.cholesky() else {
                return nan();
            };
            let minv_mu = ch.solve(&mu.0);
            DVector::from_fn(ns, |i, _| {
                let k = cyc.shape_indices()[i];
                let (_, _, dm_c) = cyc.mass_blocks(&grads[k]);
                // d/dx_k [1/2 mu' M_theta^-1 mu] = -1/2 (M_theta^-1 mu)' dM_theta (M_theta^-1 mu)
                vq[k] - 0.5 * minv_mu.dot(&(&dm_c * &minv_mu))
            })
        })
    };

    AnalyticDerivatives {
        mass_dq,
        mass_dt,
        potential_dq,
    }
}

impl ReducedSystem {
    pub fn mu(&self) -> &MomentumValue {
        &self.mu
    }

    pub fn cyclic_structure(&self) -> &CyclicStructure {
        &self.cyc
    }

    pub fn full_system(&self) -> &MechanicalSystem {
        &self.full
    }

    /// The shape-space forced mechanical system generating the reduced
    /// dynamics.
    pub fn shape_system(&self) -> &MechanicalSystem {
        &self.shape_sys
    }

    /// Routhian R_mu(t, x, xdot) = [L - mu . thetadot] with thetadot
    /// eliminated through the momentum relation.
    pub fn routhian(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<f64> {
        let thetadot = self.cyclic_rates(t, x, xdot)?;
        let q = lift_config(&self.cyc, x);
        let v = self.cyc.assemble(xdot, &thetadot);
        let s = TangentState::new(t, q, v)?;
        Ok(self.full.lagrangian(&s)? - self.mu.0.dot(&thetadot))
    }

    /// The reduced external force F_mu (paper's object; excludes the
    /// gyroscopic bookkeeping term, which vanishes for block-diagonal
    /// metrics).
    pub fn reduced_force(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>> {
        reduced_force_inner(&self.full, &self.cyc, &self.mu, t, x, xdot)
    }

    /// thetadot reconstructed from the momentum relation at a shape state.
    pub fn cyclic_rates(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>> {
        cyclic_rates(&self.full, &self.cyc, &self.mu, t, x, xdot)
    }

    /// Shape-space forced Euler-Lagrange derivative.
    pub fn reduced_field(&self, s: &TangentState, cfg: &NumericsConfig) -> Result<StateDerivative> {
        self.shape_sys.forced_el_field(s, cfg)
    }

    /// Lifts a shape state and cyclic configuration to the full phase space
    /// on the momentum level set.
    pub fn lift(
        &self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<TangentState> {
        let thetadot = self.cyclic_rates(t, x, xdot)?;
        let q = self.cyc.assemble(x, theta);
        let v = self.cyc.assemble(xdot, &thetadot);
        TangentState::new(t, q, v)
    }
}

/// Free-function alias matching the operation name.
pub fn reduced_field(
    red: &ReducedSystem,
    s: &TangentState,
    cfg: &NumericsConfig,
) -> Result<StateDerivative> {
    red.reduced_field(s, cfg)
}

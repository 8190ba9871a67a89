//! Forced mechanical systems on R x TQ and R x T*Q.
//!
//! A system is the triple (M, V, F): kinetic metric M(t, q), potential
//! V(t, q) and external force covector F(t, q, v), so L = 1/2 v'Mv - V and
//! H = 1/2 p'M^-1 p + V. The sign convention is
//! d/dt(dL/dv_i) - dL/dq_i = -F_i.

use crate::config::NumericsConfig;
use crate::error::{Error, Result};
use crate::linalg::{spd_factor, spd_solve};
use crate::state::{CotangentState, StateDerivative, TangentState};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

pub type MassEval = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarEval = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
pub type ForceEval = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MassGradEval = Arc<dyn Fn(f64, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type GradEval = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Exact derivative evaluators a model may register in place of the default
/// central differences.
#[derive(Clone)]
pub struct AnalyticDerivatives {
    /// dM/dq_k for k = 0..n, as n matrices.
    pub mass_dq: MassGradEval,
    /// dM/dt.
    pub mass_dt: MassEval,
    /// Gradient of the potential in q.
    pub potential_dq: GradEval,
}

/// A forced mechanical system: metric, potential and external force with
/// coordinate labels. Evaluators must be pure; the value is immutable after
/// construction and safe to share across threads.
#[derive(Clone)]
pub struct MechanicalSystem {
    n: usize,
    mass: MassEval,
    potential: ScalarEval,
    force: ForceEval,
    labels: Vec<String>,
    time_dependent: bool,
    analytic: Option<AnalyticDerivatives>,
}

impl std::fmt::Debug for MechanicalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MechanicalSystem")
            .field("n", &self.n)
            .field("labels", &self.labels)
            .field("time_dependent", &self.time_dependent)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl MechanicalSystem {
    pub fn new(
        n: usize,
        mass: MassEval,
        potential: ScalarEval,
        force: ForceEval,
        labels: Vec<String>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("dimension must be >= 1".into()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        Ok(Self {
            n,
            mass,
            potential,
            force,
            labels,
            time_dependent: false,
            analytic: None,
        })
    }

    /// Marks mass, potential or force as explicitly time-dependent.
    pub fn with_time_dependence(mut self, yes: bool) -> Self {
        self.time_dependent = yes;
        self
    }

    pub fn with_analytic(mut self, d: AnalyticDerivatives) -> Self {
        self.analytic = Some(d);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.analytic.is_some()
    }

    /// Returns a copy with analytic derivatives stripped, forcing the
    /// finite-difference path. Used by cross-validation tests.
    pub fn without_analytic(&self) -> Self {
        let mut s = self.clone();
        s.analytic = None;
        s
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got,
            });
        }
        Ok(())
    }

    /// Evaluates M(t, q), checking symmetry and finiteness.
    pub fn mass_at(&self, t: f64, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(q.len())?;
        let m = (self.mass)(t, q);
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: m.nrows(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mass matrix".into()));
        }
        let mut scale: f64 = 0.0;
        let mut skew: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                scale = scale.max(m[(i, j)].abs());
                skew = skew.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if skew > 1e-12 * scale.max(1.0) {
            return Err(Error::AsymmetricMass {
                deviation: skew / scale.max(1.0),
            });
        }
        Ok(m)
    }

    pub fn potential_at(&self, t: f64, q: &DVector<f64>) -> Result<f64> {
        self.check_dim(q.len())?;
        let v = (self.potential)(t, q);
        if !v.is_finite() {
            return Err(Error::NonFinite("potential".into()));
        }
        Ok(v)
    }

    /// Evaluates the force covector F(t, q, v).
    pub fn force_at(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(q.len())?;
        self.check_dim(v.len())?;
        let f = (self.force)(t, q, v);
        if f.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: f.len(),
            });
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("force".into()));
        }
        Ok(f)
    }

    /// L(t, q, v) = 1/2 v'M(t,q)v - V(t,q).
    pub fn lagrangian(&self, s: &TangentState) -> Result<f64> {
        let m = self.mass_at(s.t, &s.q)?;
        let kin = 0.5 * s.v.dot(&(&m * &s.v));
        Ok(kin - self.potential_at(s.t, &s.q)?)
    }

    /// E_L(t, q, v) = 1/2 v'M(t,q)v + V(t,q) = v . dL/dv - L.
    pub fn energy(&self, s: &TangentState) -> Result<f64> {
        let m = self.mass_at(s.t, &s.q)?;
        let kin = 0.5 * s.v.dot(&(&m * &s.v));
        Ok(kin + self.potential_at(s.t, &s.q)?)
    }

    /// Kinetic energy 1/2 v'M(t,q)v alone.
    pub fn kinetic_energy(&self, s: &TangentState) -> Result<f64> {
        let m = self.mass_at(s.t, &s.q)?;
        Ok(0.5 * s.v.dot(&(&m * &s.v)))
    }

    /// H(t, q, p) = 1/2 p'M^-1 p + V.
    pub fn hamiltonian(&self, s: &CotangentState) -> Result<f64> {
        let m = self.mass_at(s.t, &s.q)?;
        let v = spd_solve(&m, &s.p)?;
        Ok(0.5 * s.p.dot(&v) + self.potential_at(s.t, &s.q)?)
    }

    /// Legendre transform (q, v) -> (q, p = M v).
    pub fn legendre_forward(&self, s: &TangentState) -> Result<CotangentState> {
        let m = self.mass_at(s.t, &s.q)?;
        CotangentState::new(s.t, s.q.clone(), &m * &s.v)
    }

    /// Inverse fiber map (q, p) -> (q, v = M^-1 p).
    pub fn legendre_inverse(&self, s: &CotangentState) -> Result<TangentState> {
        let m = self.mass_at(s.t, &s.q)?;
        TangentState::new(s.t, s.q.clone(), spd_solve(&m, &s.p)?)
    }

    /// dM/dq_k for all k, analytic when registered, else central differences.
    pub fn mass_dq(&self, t: f64, q: &DVector<f64>, cfg: &NumericsConfig) -> Result<Vec<DMatrix<f64>>> {
        if let Some(a) = &self.analytic {
            let g = (a.mass_dq)(t, q);
            if g.len() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    got: g.len(),
                });
            }
            return Ok(g);
        }
        let mut out = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let h = cfg.fd(q[k]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let mp = self.mass_at(t, &qp)?;
            let mm = self.mass_at(t, &qm)?;
            out.push((mp - mm) / (2.0 * h));
        }
        Ok(out)
    }

    /// dM/dt, identically zero for autonomous systems.
    pub fn mass_dt(&self, t: f64, q: &DVector<f64>, cfg: &NumericsConfig) -> Result<DMatrix<f64>> {
        if !self.time_dependent {
            return Ok(DMatrix::zeros(self.n, self.n));
        }
        if let Some(a) = &self.analytic {
            return Ok((a.mass_dt)(t, q));
        }
        let h = cfg.fd(t);
        let mp = self.mass_at(t + h, q)?;
        let mm = self.mass_at(t - h, q)?;
        Ok((mp - mm) / (2.0 * h))
    }

    /// Gradient of V in q.
    pub fn potential_dq(&self, t: f64, q: &DVector<f64>, cfg: &NumericsConfig) -> Result<DVector<f64>> {
        if let Some(a) = &self.analytic {
            return Ok((a.potential_dq)(t, q));
        }
        let mut g = DVector::zeros(self.n);
        for k in 0..self.n {
            let h = cfg.fd(q[k]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            g[k] = (self.potential_at(t, &qp)? - self.potential_at(t, &qm)?) / (2.0 * h);
        }
        Ok(g)
    }

    /// dL/dq_i = 1/2 v'(dM/dq_i)v - dV/dq_i.
    pub fn lagrangian_dq(
        &self,
        t: f64,
        q: &DVector<f64>,
        v: &DVector<f64>,
        cfg: &NumericsConfig,
    ) -> Result<DVector<f64>> {
        let grads = self.mass_dq(t, q, cfg)?;
        let vq = self.potential_dq(t, q, cfg)?;
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            out[i] = 0.5 * v.dot(&(&grads[i] * v)) - vq[i];
        }
        Ok(out)
    }

    /// Forced Euler-Lagrange field at (t, q, v):
    /// dq = v and M dv = dL/dq - (dM/dt)v - Gamma(t,q,v) - F, with the
    /// convective term Gamma_i = sum_k ((dM/dq_k) v)_i v_k coming from the
    /// total time derivative of M(t, q(t)) v.
    pub fn forced_el_field(&self, s: &TangentState, cfg: &NumericsConfig) -> Result<StateDerivative> {
        self.check_dim(s.dim())?;
        let m = self.mass_at(s.t, &s.q)?;
        let grads = self.mass_dq(s.t, &s.q, cfg)?;
        let vq = self.potential_dq(s.t, &s.q, cfg)?;
        let mdot = self.mass_dt(s.t, &s.q, cfg)?;
        let f = self.force_at(s.t, &s.q, &s.v)?;

        let mut rhs = DVector::zeros(self.n);
        let grad_times_v: Vec<DVector<f64>> = grads.iter().map(|g| g * &s.v).collect();
        let mdot_v = &mdot * &s.v;
        for i in 0..self.n {
            let dl_dq = 0.5 * s.v.dot(&grad_times_v[i]) - vq[i];
            let mut convective = 0.0;
            for (gv, vk) in grad_times_v.iter().zip(s.v.iter()) {
                convective += gv[i] * vk;
            }
            rhs[i] = dl_dq - mdot_v[i] - convective - f[i];
        }
        let dv = spd_factor(&m)?.solve(&rhs);
        if dv.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("forced Euler-Lagrange field".into()));
        }
        Ok(StateDerivative {
            dq: s.v.clone(),
            dw: dv,
            dt: 1.0,
        })
    }

    /// Forced evolution field on the cotangent side:
    /// dq = M^-1 p, dp_i = -dH/dq_i - F_i(t, q, M^-1 p), where the force is
    /// the Lagrangian covector pulled back through the fiber derivative.
    pub fn forced_hamiltonian_field(
        &self,
        s: &CotangentState,
        cfg: &NumericsConfig,
    ) -> Result<StateDerivative> {
        self.check_dim(s.dim())?;
        let m = self.mass_at(s.t, &s.q)?;
        let v = spd_factor(&m)?.solve(&s.p);
        let grads = self.mass_dq(s.t, &s.q, cfg)?;
        let vq = self.potential_dq(s.t, &s.q, cfg)?;
        let f = self.force_at(s.t, &s.q, &v)?;

        // dH/dq_i = -1/2 v'(dM/dq_i)v + dV/dq_i at v = M^-1 p.
        let mut dp = DVector::zeros(self.n);
        for i in 0..self.n {
            let dh_dq = -0.5 * v.dot(&(&grads[i] * &v)) + vq[i];
            dp[i] = -dh_dq - f[i];
        }
        if dp.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("forced Hamiltonian field".into()));
        }
        Ok(StateDerivative {
            dq: v,
            dw: dp,
            dt: 1.0,
        })
    }
}

/// Free functions mirroring the operation names used throughout the tests.
pub fn eval_lagrangian(sys: &MechanicalSystem, s: &TangentState) -> Result<f64> {
    sys.lagrangian(s)
}

pub fn energy(sys: &MechanicalSystem, s: &TangentState) -> Result<f64> {
    sys.energy(s)
}

pub fn legendre_forward(sys: &MechanicalSystem, s: &TangentState) -> Result<CotangentState> {
    sys.legendre_forward(s)
}

pub fn legendre_inverse(sys: &MechanicalSystem, s: &CotangentState) -> Result<TangentState> {
    sys.legendre_inverse(s)
}

/// Convenience constructor for a constant-metric system with zero force.
pub fn free_system(mass: DMatrix<f64>, labels: Vec<String>) -> Result<MechanicalSystem> {
    let n = mass.nrows();
    MechanicalSystem::new(
        n,
        Arc::new(move |_t, _q| mass.clone()),
        Arc::new(|_t, _q| 0.0),
        Arc::new(move |_t, _q: &DVector<f64>, _v: &DVector<f64>| DVector::zeros(n)),
        labels,
    )
}

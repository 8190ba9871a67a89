//! Numerical conventions shared by every module.

use crate::error::{Error, Result};

/// Tolerances and step conventions consumed by evaluators, the integrator
/// and the hybrid executors.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericsConfig {
    /// Relative tolerance of the adaptive integrator.
    pub rel_tol: f64,
    /// Absolute tolerance of the adaptive integrator.
    pub abs_tol: f64,
    /// Band for declaring a state on a switching surface, |h| <= event_tol * scale.
    pub event_tol: f64,
    /// Minimum gap between consecutive impact times before a run is flagged Zeno.
    pub zeno_gap: f64,
    /// Hard cap on the number of impacts in one hybrid flow.
    pub max_impacts: usize,
    /// Base step for central finite differences, scaled per coordinate.
    pub fd_step: f64,
    /// Seed for every randomized probe (classification, cyclic validation).
    pub seed: u64,
}

/// Condition-number cap before a mass matrix counts as singular.
pub const COND_CAP: f64 = 1e12;
/// Bisection budget for event localization within one accepted step.
pub const MAX_BISECTIONS: usize = 200;
/// Step budget for a single continuous arc.
pub const MAX_STEPS: usize = 20_000_000;

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            event_tol: 1e-10,
            zeno_gap: 1e-7,
            max_impacts: 1_000_000,
            fd_step: 1e-6,
            seed: 0,
        }
    }
}

impl NumericsConfig {
    /// Checks positivity and the rel/abs coupling constraint.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("event_tol", self.event_tol),
            ("zeno_gap", self.zeno_gap),
            ("fd_step", self.fd_step),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_impacts == 0 {
            return Err(Error::InvalidConfig("max_impacts must be positive".into()));
        }
        if self.rel_tol < self.abs_tol * 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "rel_tol {} must be >= abs_tol*1e-6 = {}",
                self.rel_tol,
                self.abs_tol * 1e-6
            )));
        }
        Ok(())
    }

    /// Central-difference step for a coordinate of magnitude `x`.
    pub fn fd(&self, x: f64) -> f64 {
        self.fd_step * x.abs().max(1.0)
    }

    /// Returns a copy with integrator tolerances divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..self.clone()
        }
    }
}

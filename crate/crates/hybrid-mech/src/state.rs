//! Phase-space state types on R x TQ and R x T*Q.

use crate::error::{Error, Result};
use nalgebra::DVector;

fn check_finite(label: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(label.to_string()));
    }
    Ok(())
}

/// A point (t, q, v) of R x TQ.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl TangentState {
    pub fn new(t: f64, q: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if q.len() != v.len() || q.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: q.len().max(1),
                got: v.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("time".into()));
        }
        check_finite("configuration", &q)?;
        check_finite("velocity", &v)?;
        Ok(Self { t, q, v })
    }

    pub fn from_slices(t: f64, q: &[f64], v: &[f64]) -> Result<Self> {
        Self::new(t, DVector::from_row_slice(q), DVector::from_row_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// A point (t, q, p) of R x T*Q.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentState {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl CotangentState {
    pub fn new(t: f64, q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: q.len().max(1),
                got: p.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("time".into()));
        }
        check_finite("configuration", &q)?;
        check_finite("momentum", &p)?;
        Ok(Self { t, q, p })
    }

    pub fn from_slices(t: f64, q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(t, DVector::from_row_slice(q), DVector::from_row_slice(p))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Components of a forced evolution vector field at a state.
///
/// `dw` is the velocity derivative on the tangent side and the momentum
/// derivative on the cotangent side. `dt` is 1 for evolution fields; 0 is
/// permitted for callers using the autonomous convention.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dq: DVector<f64>,
    pub dw: DVector<f64>,
    pub dt: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        let q = DVector::from_row_slice(&[1.0, 2.0]);
        let v = DVector::from_row_slice(&[1.0]);
        assert!(TangentState::new(0.0, q, v).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(TangentState::from_slices(0.0, &[f64::NAN], &[0.0]).is_err());
        assert!(CotangentState::from_slices(f64::INFINITY, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn rejects_empty() {
        assert!(TangentState::from_slices(0.0, &[], &[]).is_err());
    }
}

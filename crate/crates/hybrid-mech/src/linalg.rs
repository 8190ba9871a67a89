//! Small dense linear-algebra helpers around symmetric positive-definite
//! factorization.

use crate::config::COND_CAP;
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Checks symmetry to 1e-12 relative, then factors. The condition number is
/// estimated from the Cholesky diagonal; above [`COND_CAP`] the matrix counts
/// as singular.
pub fn spd_factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let mut scale: f64 = 0.0;
    let mut skew: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(m[(i, j)].abs());
            skew = skew.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if !scale.is_finite() {
        return Err(Error::NonFinite("mass matrix".into()));
    }
    if skew > 1e-12 * scale.max(1.0) {
        return Err(Error::AsymmetricMass {
            deviation: skew / scale.max(1.0),
        });
    }
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let chol = sym.cholesky().ok_or(Error::SingularMetric { cond: f64::INFINITY })?;
    let diag = chol.l_dirty();
    let mut lmin = f64::INFINITY;
    let mut lmax: f64 = 0.0;
    for i in 0..n {
        let d = diag[(i, i)].abs();
        lmin = lmin.min(d);
        lmax = lmax.max(d);
    }
    let cond = (lmax / lmin).powi(2);
    if !cond.is_finite() || cond > COND_CAP {
        return Err(Error::SingularMetric { cond });
    }
    Ok(chol)
}

/// Solves M x = b for SPD M.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(spd_factor(m)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_hand_checked_2x2() {
        // M = [[2,1],[1,1]], b = (1,0) -> x = (1,-1).
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[1.0, 0.0]);
        let x = spd_solve(&m, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 1.0]);
        assert!(matches!(
            spd_factor(&m),
            Err(Error::AsymmetricMass { .. })
        ));
    }

    #[test]
    fn rejects_indefinite_and_ill_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(spd_factor(&m), Err(Error::SingularMetric { .. })));

        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        assert!(matches!(spd_factor(&m), Err(Error::SingularMetric { .. })));
    }
}

//! Test-only oracles, independent of the library implementation paths they
//! validate.
//!
//! The acceleration oracle here derives forced Euler-Lagrange dynamics by
//! finite-differencing a scalar Lagrangian directly, never touching the mass
//! matrix / potential decomposition the library works with.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for reproducible randomized tests.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Second derivative d^2f/(dx dy) by nested central differences.
pub fn central_diff2(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, hx: f64, hy: f64) -> f64 {
    (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy))
        / (4.0 * hx * hy)
}

/// Acceleration of the forced Euler-Lagrange equations derived from a scalar
/// Lagrangian L(t, q, v) and force covector F(t, q, v) by finite differences
/// alone.
///
/// Solves A dv = b with
///   A_ij = d2L/dv_i dv_j,
///   b_i  = dL/dq_i - F_i - d2L/(dv_i dt) - sum_j d2L/(dv_i dq_j) v_j,
/// which is the expansion of d/dt(dL/dv_i) - dL/dq_i = -F_i.
///
/// `h1` is the first-derivative step, `h2` the second-derivative step
/// (second differences lose accuracy faster, so a larger step is in order).
pub fn el_acceleration_from_lagrangian(
    lagrangian: &dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64,
    force: &dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
    h1: f64,
    h2: f64,
) -> DVector<f64> {
    let n = q.len();
    let step = |x: f64, h: f64| h * x.abs().max(1.0);

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let hij = central_diff2(
                |vi, vj| {
                    let mut vv = v.clone();
                    // When i == j the two probes address the same slot; apply both.
                    if i == j {
                        vv[i] = vi + (vj - v[j]);
                    } else {
                        vv[i] = vi;
                        vv[j] = vj;
                    }
                    lagrangian(t, q, &vv)
                },
                v[i],
                v[j],
                step(v[i], h2),
                step(v[j], h2),
            );
            a[(i, j)] = hij;
        }
    }

    let f = force(t, q, v);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        let dl_dqi = central_diff(
            |qi| {
                let mut qq = q.clone();
                qq[i] = qi;
                lagrangian(t, &qq, v)
            },
            q[i],
            step(q[i], h1),
        );

        let d2l_dvi_dt = central_diff2(
            |vi, tt| {
                let mut vv = v.clone();
                vv[i] = vi;
                lagrangian(tt, q, &vv)
            },
            v[i],
            t,
            step(v[i], h2),
            step(t, h2),
        );

        let mut convective = 0.0;
        for j in 0..n {
            let d2l_dvi_dqj = central_diff2(
                |vi, qj| {
                    let mut vv = v.clone();
                    let mut qq = q.clone();
                    vv[i] = vi;
                    qq[j] = qj;
                    lagrangian(t, &qq, &vv)
                },
                v[i],
                q[j],
                step(v[i], h2),
                step(q[j], h2),
            );
            convective += d2l_dvi_dqj * v[j];
        }

        b[i] = dl_dqi - f[i] - d2l_dvi_dt - convective;
    }

    a.lu().solve(&b).expect("oracle Hessian singular")
}

/// Composite Simpson quadrature of `f` over [a, b] with `panels` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(1) * 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Random symmetric positive-definite matrix with eigenvalues in [lo, hi].
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    // Random orthogonal basis via QR of a Gaussian-ish matrix.
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let qr = raw.qr();
    let q = qr.q();
    let eigs = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
    let lambda = DMatrix::from_diagonal(&eigs);
    let m = &q * lambda * q.transpose();
    // Symmetrize away rounding.
    0.5 * (&m + m.transpose())
}

/// Random vector with entries in [lo, hi].
pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_harmonic_oscillator() {
        // L = 1/2 v^2 - 1/2 q^2, F = 0 -> a = -q.
        let l = |_t: f64, q: &DVector<f64>, v: &DVector<f64>| 0.5 * v[0] * v[0] - 0.5 * q[0] * q[0];
        let f = |_t: f64, _q: &DVector<f64>, _v: &DVector<f64>| DVector::from_row_slice(&[0.0]);
        let q = DVector::from_row_slice(&[0.7]);
        let v = DVector::from_row_slice(&[-0.3]);
        let a = el_acceleration_from_lagrangian(&l, &f, 0.0, &q, &v, 1e-6, 1e-4);
        assert!((a[0] - (-0.7)).abs() < 1e-7, "a = {}", a[0]);
    }

    #[test]
    fn oracle_handles_time_dependent_mass() {
        // L = 1/2 e^t v^2: d/dt(e^t v) = 0 -> a = -v.
        let l = |t: f64, _q: &DVector<f64>, v: &DVector<f64>| 0.5 * t.exp() * v[0] * v[0];
        let f = |_t: f64, _q: &DVector<f64>, _v: &DVector<f64>| DVector::from_row_slice(&[0.0]);
        let q = DVector::from_row_slice(&[0.2]);
        let v = DVector::from_row_slice(&[1.3]);
        let a = el_acceleration_from_lagrangian(&l, &f, 0.4, &q, &v, 1e-6, 1e-4);
        assert!((a[0] - (-1.3)).abs() < 1e-6, "a = {}", a[0]);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let val = simpson(|x| x * x * x, 0.0, 2.0, 4);
        assert!((val - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spd_is_positive_definite() {
        let mut r = rng(7);
        for _ in 0..10 {
            let m = random_spd(&mut r, 4, 0.5, 3.0);
            assert!(m.clone().cholesky().is_some());
        }
    }
}

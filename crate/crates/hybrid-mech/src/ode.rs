//! Adaptive Dormand-Prince 5(4) integration with a continuous fourth-order
//! extension on every accepted step.
//!
//! Event localization needs a stepper that can be interrogated and restarted
//! mid-run, so the core is the [`Dopri5`] stepper: one accepted step at a
//! time, each carrying its own dense-output segment.

use crate::config::{NumericsConfig, MAX_STEPS};
use crate::error::{Error, Result};
use nalgebra::DVector;

/// Right-hand side of a first-order system y' = f(t, y).
pub trait OdeRhs {
    fn eval(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()>;
}

impl<F> OdeRhs for F
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    fn eval(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()> {
        self(t, y, dy)
    }
}

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Error coefficients: difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output coefficients (Hairer, Norsett, Wanner).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Continuous extension over one accepted step [t0, t0 + h].
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [DVector<f64>; 5],
}

impl DenseSegment {
    /// Interpolated state at `t`, clamped to the segment.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h >= 0.0 {
            (self.t0, self.t0 + self.h)
        } else {
            (self.t0 + self.h, self.t0)
        };
        t >= lo && t <= hi
    }
}

/// Piecewise continuous extension over a whole arc.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    pub segments: Vec<DenseSegment>,
}

impl DenseOutput {
    pub fn t_start(&self) -> Option<f64> {
        self.segments.first().map(|s| s.t0)
    }

    pub fn t_end(&self) -> Option<f64> {
        self.segments.last().map(|s| s.t_end())
    }

    /// Evaluates at `t`, clamping to the covered interval.
    pub fn eval(&self, t: f64) -> Option<DVector<f64>> {
        if self.segments.is_empty() {
            return None;
        }
        // Binary search over segment start times.
        let mut lo = 0usize;
        let mut hi = self.segments.len() - 1;
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.segments[mid].t0 <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(self.segments[lo].eval(t))
    }
}

/// Result of one accepted step.
pub struct AcceptedStep {
    pub dense: DenseSegment,
    pub t_new: f64,
}

/// One-directional adaptive stepper (t increasing).
pub struct Dopri5<'f> {
    f: &'f dyn OdeRhs,
    pub t: f64,
    pub y: DVector<f64>,
    t_end: f64,
    h: f64,
    k1: DVector<f64>, // FSAL derivative at (t, y)
    rtol: f64,
    atol: f64,
    steps: usize,
    just_rejected: bool,
}

impl<'f> Dopri5<'f> {
    pub fn new(
        f: &'f dyn OdeRhs,
        t0: f64,
        y0: DVector<f64>,
        t_end: f64,
        cfg: &NumericsConfig,
    ) -> Result<Self> {
        let mut k1 = DVector::zeros(y0.len());
        f.eval(t0, &y0, &mut k1)?;
        if k1.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("initial derivative".into()));
        }
        let mut s = Self {
            f,
            t: t0,
            y: y0,
            t_end,
            h: 0.0,
            k1,
            rtol: cfg.rel_tol,
            atol: cfg.abs_tol,
            steps: 0,
            just_rejected: false,
        };
        s.h = s.initial_step()?;
        Ok(s)
    }

    /// Hairer-style starting step from local scale estimates.
    fn initial_step(&self) -> Result<f64> {
        let span = self.t_end - self.t;
        if span <= 0.0 {
            return Ok(span.max(1e-16));
        }
        let sc = |i: usize| self.atol + self.rtol * self.y[i].abs();
        let n = self.y.len() as f64;
        let d0 = (self.y.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (self
            .k1
            .iter()
            .enumerate()
            .map(|(i, v)| (v / sc(i)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(span);
        // One explicit Euler probe to estimate the second derivative scale.
        let y1 = &self.y + h0 * &self.k1;
        let mut f1 = DVector::zeros(self.y.len());
        self.f.eval(self.t + h0, &y1, &mut f1)?;
        let d2 = ((&f1 - &self.k1)
            .iter()
            .enumerate()
            .map(|(i, v)| (v / sc(i)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let d_max = d1.max(d2);
        let h1 = if d_max <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d_max).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    pub fn finished(&self) -> bool {
        self.t >= self.t_end
    }

    /// Restricts the remaining integration horizon (used after truncation).
    pub fn set_t_end(&mut self, t_end: f64) {
        self.t_end = t_end;
    }

    /// Caps the size of the next attempted step.
    pub fn cap_step(&mut self, cap: f64) {
        if cap > 0.0 {
            self.h = self.h.min(cap);
        }
    }

    /// Advances by one accepted step, or returns None at the horizon.
    pub fn step(&mut self) -> Result<Option<AcceptedStep>> {
        if self.finished() {
            return Ok(None);
        }
        let n = self.y.len();
        let mut k = vec![DVector::zeros(n); 7];
        k[0] = self.k1.clone();

        loop {
            self.steps += 1;
            if self.steps > MAX_STEPS {
                return Err(Error::MaxStepsExceeded);
            }
            let mut h = self.h.min(self.t_end - self.t);
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: self.t });
            }
            // Stage evaluations.
            let mut failed = false;
            for stage in 1..7 {
                let mut yi = self.y.clone();
                for (j, kj) in k.iter().enumerate().take(stage) {
                    let a = A[stage][j];
                    if a != 0.0 {
                        yi.axpy(h * a, kj, 1.0);
                    }
                }
                let t_stage = self.t + C[stage] * h;
                let (head, tail) = k.split_at_mut(stage);
                let _ = head;
                self.f.eval(t_stage, &yi, &mut tail[0])?;
                if tail[0].iter().any(|x| !x.is_finite()) {
                    failed = true;
                    break;
                }
            }
            if failed {
                // Retry with a smaller step before giving up.
                self.h = h * 0.25;
                self.just_rejected = true;
                if self.h < 1e-14 * self.t.abs().max(1.0) {
                    return Err(Error::NonFinite("integration state".into()));
                }
                continue;
            }

            // Fifth-order solution (row 6 of A holds the b weights).
            let mut y_new = self.y.clone();
            for (j, kj) in k.iter().enumerate().take(6) {
                let b = A[6][j];
                if b != 0.0 {
                    y_new.axpy(h * b, kj, 1.0);
                }
            }
            let t_new = self.t + h;
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            self.f.eval(t_new, &y_new, &mut tail[0])?;
            if tail[0].iter().any(|x| !x.is_finite()) || y_new.iter().any(|x| !x.is_finite()) {
                self.h = h * 0.25;
                self.just_rejected = true;
                continue;
            }

            // Error estimate.
            let mut err_sq = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += E[j] * kj[i];
                    }
                }
                e *= h;
                let sc = self.atol + self.rtol * self.y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / n as f64).sqrt();

            if err <= 1.0 {
                // Accept: build the dense segment.
                let ydiff = &y_new - &self.y;
                let bspl = h * &k[0] - &ydiff;
                let r4 = &ydiff - h * &k[6] - &bspl;
                let mut r5 = DVector::zeros(n);
                for (j, kj) in k.iter().enumerate() {
                    if D[j] != 0.0 {
                        r5.axpy(D[j], kj, 1.0);
                    }
                }
                r5 *= h;
                let dense = DenseSegment {
                    t0: self.t,
                    h,
                    rcont: [self.y.clone(), ydiff, bspl, r4, r5],
                };

                let facmax = if self.just_rejected { 1.0 } else { 5.0 };
                let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, facmax);
                self.h = h * fac;
                self.just_rejected = false;
                self.t = t_new;
                self.y = y_new;
                self.k1 = k[6].clone();
                return Ok(Some(AcceptedStep { dense, t_new }));
            }

            // Reject and shrink.
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            self.h = h;
            self.just_rejected = true;
        }
    }

    /// Truncates the current state to time `t` inside the last accepted step.
    pub fn reset_to(&mut self, t: f64, y: DVector<f64>) -> Result<()> {
        self.t = t;
        self.y = y;
        self.f.eval(self.t, &self.y, &mut self.k1)?;
        Ok(())
    }
}

/// Convenience driver: integrates to `t_end`, returning the dense output and
/// final state.
pub fn integrate(
    f: &dyn OdeRhs,
    t0: f64,
    y0: DVector<f64>,
    t_end: f64,
    cfg: &NumericsConfig,
) -> Result<(DenseOutput, DVector<f64>)> {
    let mut stepper = Dopri5::new(f, t0, y0, t_end, cfg)?;
    let mut dense = DenseOutput::default();
    while let Some(step) = stepper.step()? {
        dense.segments.push(step.dense);
    }
    Ok((dense, stepper.y.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sho(_t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let cfg = NumericsConfig::default();
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let t_end = 2.0 * std::f64::consts::PI;
        let (_, y) = integrate(&sho, 0.0, y0, t_end, &cfg).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8, "y0 = {}", y[0]);
        assert!(y[1].abs() < 1e-8, "y1 = {}", y[1]);
    }

    #[test]
    fn dense_output_matches_analytic_solution() {
        let cfg = NumericsConfig::default();
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let (dense, _) = integrate(&sho, 0.0, y0, 3.0, &cfg).unwrap();
        for i in 0..=300 {
            let t = 3.0 * i as f64 / 300.0;
            let y = dense.eval(t).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-7, "t={t} y={}", y[0]);
            assert!((y[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = 2t -> y = t^2.
        let f = |t: f64, _y: &DVector<f64>, dy: &mut DVector<f64>| {
            dy[0] = 2.0 * t;
            Ok(())
        };
        let cfg = NumericsConfig::default();
        let (_, y) = integrate(&f, 0.0, DVector::from_row_slice(&[0.0]), 2.0, &cfg).unwrap();
        assert!((y[0] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_rhs_is_an_error() {
        let f = |t: f64, _y: &DVector<f64>, dy: &mut DVector<f64>| {
            dy[0] = if t > 0.5 { f64::NAN } else { 1.0 };
            Ok(())
        };
        let cfg = NumericsConfig::default();
        let r = integrate(&f, 0.0, DVector::from_row_slice(&[0.0]), 1.0, &cfg);
        assert!(r.is_err());
    }

    #[test]
    fn refined_tolerance_improves_error() {
        let cfg = NumericsConfig::default();
        let coarse = NumericsConfig {
            rel_tol: 1e-5,
            abs_tol: 1e-7,
            ..cfg.clone()
        };
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let t_end = 20.0;
        let (_, yc) = integrate(&sho, 0.0, y0.clone(), t_end, &coarse).unwrap();
        let (_, yf) = integrate(&sho, 0.0, y0, t_end, &cfg).unwrap();
        let exact = t_end.cos();
        assert!((yf[0] - exact).abs() < (yc[0] - exact).abs());
    }
}

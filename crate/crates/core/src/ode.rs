//! Adaptive Dormand-Prince 5(4) integrator for linear matrix-free flows.

use crate::error::{Error, Result};
use crate::linalg::{c, CVec};

#[derive(Clone, Copy, Debug)]
pub struct OdeTolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self { abs: 1e-10, rel: 1e-8 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_step: f64,
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates y' = f(y) from 0 to `t`.
pub fn integrate(
    f: &dyn Fn(&CVec) -> CVec,
    y0: &CVec,
    t: f64,
    tol: OdeTolerance,
) -> Result<(CVec, OdeStats)> {
    let mut stats = OdeStats::default();
    if t == 0.0 {
        return Ok((y0.clone(), stats));
    }
    let mut y = y0.clone();
    let mut s = 0.0;
    let mut h = (t * 1e-3).min(0.05).max(1e-8);
    let mut k1 = f(&y);
    while s < t {
        if s + h > t {
            h = t - s;
        }
        let mut k: Vec<CVec> = vec![k1.clone()];
        for stage in 0..6 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    yi.axpy(c(h * a, 0.0), kj, c(1.0, 0.0));
                }
            }
            k.push(f(&yi));
        }
        // stage 6 evaluated at the 5th-order solution (FSAL)
        let mut y5 = y.clone();
        let mut err = CVec::zeros(y.len());
        for j in 0..7 {
            if B5[j] != 0.0 {
                y5.axpy(c(h * B5[j], 0.0), &k[j], c(1.0, 0.0));
            }
            let e = B5[j] - B4[j];
            if e != 0.0 {
                err.axpy(c(h * e, 0.0), &k[j], c(1.0, 0.0));
            }
        }
        let mut norm = 0.0f64;
        for i in 0..y.len() {
            let scale = tol.abs + tol.rel * y[i].norm().max(y5[i].norm());
            norm = norm.max(err[i].norm() / scale);
        }
        if norm <= 1.0 {
            s += h;
            y = y5;
            k1 = k.swap_remove(6);
            stats.accepted += 1;
            stats.last_step = h;
        } else {
            stats.rejected += 1;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t.max(1.0) || stats.accepted + stats.rejected > 5_000_000 {
            return Err(Error::Numeric(format!(
                "integrator stalled at s = {s:e} of {t:e}: step {h:e}, {} accepted, {} rejected",
                stats.accepted, stats.rejected
            )));
        }
    }
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let f = |y: &CVec| y * c(-2.0, 1.0);
        let y0 = CVec::from_element(1, c(1.0, 0.0));
        let (y, _) = integrate(&f, &y0, 3.0, OdeTolerance { abs: 1e-12, rel: 1e-10 }).unwrap();
        let exact = num_complex::Complex64::new(-6.0, 3.0).exp();
        assert!((y[0] - exact).norm() < 1e-9);
    }
}

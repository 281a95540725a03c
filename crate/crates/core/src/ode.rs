//! Adaptive Dormand–Prince 5(4) integrator.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
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

const MAX_STEPS: usize = 2_000_000;

/// Integrates `y' = f(t, y)` from `t0` to `t1`, landing exactly on each
/// breakpoint in between. `inside` is checked after every accepted step.
pub fn integrate<F, D>(
    f: F,
    t0: f64,
    t1: f64,
    y0: DVector<f64>,
    tol: Tolerances,
    breakpoints: &[f64],
    inside: D,
) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    D: Fn(&DVector<f64>) -> bool,
{
    if t1 == t0 {
        return Ok(y0);
    }
    let dir = (t1 - t0).signum();
    let mut stops: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| (b - t0) * dir > 0.0 && (t1 - b) * dir > 0.0)
        .collect();
    stops.sort_by(|a, b| (a * dir).partial_cmp(&(b * dir)).unwrap());
    stops.push(t1);

    let mut t = t0;
    let mut y = y0;
    let mut h = 0.01 * (t1 - t0).abs().min(1.0) * dir;
    let mut steps = 0;
    let mut k: [DVector<f64>; 7] = std::array::from_fn(|_| DVector::zeros(y.len()));
    for &stop in &stops {
        while (stop - t) * dir > 1e-15 * stop.abs().max(1.0) {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::StepFailure { t });
            }
            let mut last = false;
            if ((t + h) - stop) * dir >= 0.0 {
                h = stop - t;
                last = true;
            }
            k[0] = f(t, &y);
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        ys.axpy(h * A[s][j], kj, 1.0);
                    }
                }
                k[s] = f(t + C[s] * h, &ys);
            }
            let mut y5 = y.clone();
            let mut err = DVector::zeros(y.len());
            for s in 0..7 {
                if B5[s] != 0.0 {
                    y5.axpy(h * B5[s], &k[s], 1.0);
                }
                err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
            }
            let mut e2 = 0.0;
            for i in 0..y.len() {
                let sc = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
                e2 += (err[i] / sc).powi(2);
            }
            let e = (e2 / y.len() as f64).sqrt();
            if !e.is_finite() {
                h *= 0.25;
                if h.abs() < 1e-14 {
                    return Err(Error::StepFailure { t });
                }
                continue;
            }
            if e <= 1.0 {
                t = if last { stop } else { t + h };
                y = y5;
                if !inside(&y) {
                    return Err(Error::LeftDomain { t });
                }
                let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
            } else {
                h *= (0.9 * e.powf(-0.2)).clamp(0.1, 1.0);
                if h.abs() < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepFailure { t });
                }
            }
        }
        t = stop;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y| -y, 0.0, 2.0, DVector::from_element(1, 1.0), Tolerances::default(), &[], |_| true)
            .unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn harmonic_oscillator_with_breakpoints() {
        let f = |_: f64, y: &DVector<f64>| DVector::from_vec(vec![y[1], -y[0]]);
        let y = integrate(f, 0.0, 3.0, DVector::from_vec(vec![1.0, 0.0]), Tolerances::default(), &[0.5, 1.7], |_| true)
            .unwrap();
        assert!((y[0] - 3.0f64.cos()).abs() < 1e-11);
        assert!((y[1] + 3.0f64.sin()).abs() < 1e-11);
    }

    #[test]
    fn domain_exit() {
        let r = integrate(|_, _| DVector::from_element(1, 1.0), 0.0, 2.0, DVector::zeros(1), Tolerances::default(), &[], |y| {
            y[0] < 1.0
        });
        assert!(matches!(r, Err(Error::LeftDomain { .. })));
    }

    #[test]
    fn backward_in_time() {
        let y = integrate(|_, y| y.clone(), 1.0, 0.0, DVector::from_element(1, 1.0), Tolerances::default(), &[], |_| true)
            .unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-12);
    }
}

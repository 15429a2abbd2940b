//! Dormand-Prince 5(4) with standard step-size control on a complex state vector.

use crate::linalg::c64;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// What the observer wants after an accepted step.
pub enum Control {
    Continue,
    Stop,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate y' = f(t, y) from t0 to t1. `observe(t, y, f(t, y))` runs after every
/// accepted step and may stop the integration early. Returns the final time.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut Vec<c64>,
    tol: Tolerances,
    max_steps: usize,
    mut observe: O,
) -> Result<(f64, StepStats)>
where
    F: FnMut(f64, &[c64], &mut [c64]),
    O: FnMut(f64, &[c64], &[c64]) -> Control,
{
    let n = y.len();
    let mut stats = StepStats::default();
    let mut k: Vec<Vec<c64>> = vec![vec![c64::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![c64::new(0.0, 0.0); n];
    let mut ynew = vec![c64::new(0.0, 0.0); n];
    let mut t = t0;
    f(t, y, &mut k[0]);
    stats.evaluations += 1;
    if let Control::Stop = observe(t, y, &k[0]) {
        return Ok((t, stats));
    }
    let mut h = initial_step(y, &k[0], tol, t1 - t0);
    let mut last_rejected = false;
    while t < t1 {
        if stats.accepted + stats.rejected >= max_steps {
            return Err(Error::Integration(format!("step limit {max_steps} reached at t = {t}")));
        }
        let finishing = t + h >= t1;
        if finishing {
            h = t1 - t;
        }
        let stages: [(&[f64], f64); 5] = [
            (&[A21], C2),
            (&[A31, A32], C3),
            (&[A41, A42, A43], C4),
            (&[A51, A52, A53, A54], C5),
            (&[A61, A62, A63, A64, A65], 1.0),
        ];
        for (s, (a, c)) in stages.iter().enumerate() {
            for i in 0..n {
                let mut acc = y[i];
                for (j, aj) in a.iter().enumerate() {
                    acc += k[j][i] * (h * aj);
                }
                tmp[i] = acc;
            }
            let (_, tail) = k.split_at_mut(s + 1);
            f(t + c * h, &tmp, &mut tail[0]);
        }
        for i in 0..n {
            ynew[i] = y[i] + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * h;
        }
        let (head, tail) = k.split_at_mut(6);
        f(t + h, &ynew, &mut tail[0]);
        stats.evaluations += 6;
        let k7 = &tail[0];
        let mut err = 0.0;
        for i in 0..n {
            let e = (head[0][i] * E1 + head[2][i] * E3 + head[3][i] * E4 + head[4][i] * E5 + head[5][i] * E6 + k7[i] * E7) * h;
            let sc = tol.atol + tol.rtol * y[i].norm().max(ynew[i].norm());
            err += (e.norm() / sc).powi(2);
        }
        // Frobenius rather than RMS: eigenvalues of ρ move by at most the
        // Frobenius norm of the step error, however it is spread over entries.
        let err = err.sqrt();
        if !err.is_finite() {
            return Err(Error::Integration(format!("non-finite error estimate at t = {t}")));
        }
        if err <= 1.0 {
            t = if finishing { t1 } else { t + h };
            std::mem::swap(y, &mut ynew);
            k.swap(0, 6);
            stats.accepted += 1;
            let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            if let Control::Stop = observe(t, y, &k[0]) {
                return Ok((t, stats));
            }
            h *= fac;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h < 1e-14 * t1.abs().max(1.0) {
            return Err(Error::Integration(format!("step size underflow at t = {t}")));
        }
    }
    Ok((t, stats))
}

fn initial_step(y: &[c64], dy: &[c64], tol: Tolerances, span: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = tol.atol + tol.rtol * yi.norm();
        d0 += (yi.norm() / sc).powi(2);
        d1 += (fi.norm() / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span.abs()).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotating_decaying_scalar() {
        // y' = (-γ + iω) y
        let (g, w) = (0.3, 2.0);
        let mut y = vec![c64::new(1.0, 0.0)];
        let tol = Tolerances { atol: 1e-12, rtol: 1e-10 };
        let (t, st) = integrate(
            |_, y, d| d[0] = y[0] * c64::new(-g, w),
            0.0,
            5.0,
            &mut y,
            tol,
            100_000,
            |_, _, _| Control::Continue,
        )
        .unwrap();
        assert_eq!(t, 5.0);
        let exact = c64::new(0.0, w * 5.0).exp() * (-g * 5.0f64).exp();
        assert!((y[0] - exact).norm() < 1e-9, "{:?} {:?}", y[0], exact);
        assert!(st.accepted > 10);
    }

    #[test]
    fn observer_can_stop() {
        let mut y = vec![c64::new(1.0, 0.0)];
        let tol = Tolerances { atol: 1e-9, rtol: 1e-7 };
        let (t, _) = integrate(
            |_, y, d| d[0] = -y[0],
            0.0,
            100.0,
            &mut y,
            tol,
            100_000,
            |_, y, _| if y[0].re < 0.5 { Control::Stop } else { Control::Continue },
        )
        .unwrap();
        assert!(t < 100.0 && y[0].re < 0.5);
    }
}

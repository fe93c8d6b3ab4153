//! Adaptive Dormand–Prince 5(4) integration for small autonomous-in-form systems.

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rtol: 1e-12, atol: 1e-12 }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Integrates `y' = f(t, y)` from `t0` to `t1`, returning the state at `t1`
/// and a suggested next step. `f` may reject a state by returning `None`
/// (for instance when a coordinate leaves its domain), which shrinks the step.
pub fn integrate<const D: usize, F>(
    f: &F,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    h_guess: f64,
    tol: Tolerance,
) -> Result<([f64; D], f64)>
where
    F: Fn(f64, &[f64; D]) -> Option<[f64; D]>,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok((y0, h_guess));
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = h_guess.abs().min(span.abs()).max(1e-14) * dir;
    let h_min = 1e-14 * (1.0 + t0.abs().max(t1.abs()));
    let mut k1 = f(t, &y)
        .ok_or_else(|| LabError::StepUnderflow { at: t, detail: "right-hand side undefined at start".into() })?;
    let mut last_h = h;
    loop {
        let remaining = t1 - t;
        if remaining * dir <= 0.0 {
            break;
        }
        let final_step = h.abs() >= remaining.abs();
        let hs = if final_step { remaining } else { h };
        let mut k = [[0.0; D]; 7];
        k[0] = k1;
        let mut ok = true;
        for s in 1..7 {
            let mut ys = y;
            for d in 0..D {
                let mut acc = 0.0;
                for (r, kr) in k.iter().enumerate().take(s) {
                    acc += A[s][r] * kr[d];
                }
                ys[d] += hs * acc;
            }
            match f(t + C[s] * hs, &ys) {
                Some(v) => k[s] = v,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        let mut err = f64::INFINITY;
        let mut y_new = y;
        if ok {
            err = 0.0;
            for d in 0..D {
                let mut acc = 0.0;
                let mut eacc = 0.0;
                for s in 0..7 {
                    acc += B[s] * k[s][d];
                    eacc += E[s] * k[s][d];
                }
                y_new[d] = y[d] + hs * acc;
                let sc = tol.atol + tol.rtol * y[d].abs().max(y_new[d].abs());
                err = f64::max(err, (hs * eacc).abs() / sc);
            }
            if y_new.iter().any(|v| !v.is_finite()) {
                err = f64::INFINITY;
            }
        }
        if err <= 1.0 {
            t = if final_step { t1 } else { t + hs };
            y = y_new;
            k1 = k[6];
            last_h = hs;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = hs * fac;
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h = hs * fac;
            if h.abs() < h_min {
                return Err(LabError::StepUnderflow { at: t, detail: format!("step {h:e} below minimum") });
            }
        }
    }
    Ok((y, last_h.abs().max(h.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &[f64; 2]| Some([y[1], -y[0]]);
        let (y, _) = integrate(&f, 0.0, [1.0, 0.0], 2.0 * std::f64::consts::PI, 0.1, Tolerance::default()).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let f = |_t: f64, y: &[f64; 1]| Some([y[0]]);
        let (y, _) = integrate(&f, 1.0, [1.0], 0.0, 0.1, Tolerance::default()).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-12);
    }
}

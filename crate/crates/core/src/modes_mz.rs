//! Mode magnitudes of a trajectory split around a threshold μ, the
//! differential inequalities they satisfy, and the three-function ODE lemma
//! used to decide which mode group dominates backward in time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::duhamel::Trajectory;
use crate::entropy::c2_proxy;
use crate::error::{LabError, Result};
use crate::graph_energy::GraphEnergy;
use crate::numeric::{linear_fit, weighted_inner};
use crate::spectral::SpectralData;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeTrajectory {
    pub times: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub v_zero: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub v_total: Vec<f64>,
    /// max over active nodes of |v|, |v′|, |v″|.
    pub delta: Vec<f64>,
    pub mu: f64,
    pub tol_zero: f64,
    /// Smallest computed eigenvalue above the zero bucket.
    pub mu_above: Option<f64>,
    /// Largest eigenvalue below the zero bucket.
    pub mu_below: Option<f64>,
    pub lambdas: Vec<f64>,
}

impl ModeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest V₊² + V₀² + V₋² − V² over the samples.
    pub fn bessel_excess(&self) -> f64 {
        (0..self.len())
            .map(|k| {
                self.v_plus[k].powi(2) + self.v_zero[k].powi(2) + self.v_minus[k].powi(2) - self.v_total[k].powi(2)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// V₊, V₀, V₋ (computed modes only), V and δ at every frame.
pub fn mode_trajectory(
    traj: &Trajectory,
    spec: &SpectralData,
    energy: &GraphEnergy,
    mu: f64,
) -> Result<ModeTrajectory> {
    let n = spec.log_mass.len();
    if energy.len() != n {
        return Err(LabError::GridMismatch { expected: n, got: energy.len() });
    }
    for (f, c) in traj.frames.iter().zip(&traj.coeffs) {
        if f.len() != n {
            return Err(LabError::GridMismatch { expected: n, got: f.len() });
        }
        if c.len() != spec.modes() {
            return Err(LabError::GridMismatch { expected: spec.modes(), got: c.len() });
        }
    }
    let tol = spec.tol_zero;
    let bucket = |l: f64| -> i8 {
        if (l - mu).abs() <= tol {
            0
        } else if l > mu {
            1
        } else {
            -1
        }
    };
    let mu_above = spec.lambdas.iter().copied().filter(|l| bucket(*l) == 1).reduce(f64::min);
    let mu_below = spec.lambdas.iter().copied().filter(|l| bucket(*l) == -1).reduce(f64::max);
    let mut out = ModeTrajectory {
        times: traj.times.clone(),
        v_plus: Vec::with_capacity(traj.len()),
        v_zero: Vec::with_capacity(traj.len()),
        v_minus: Vec::with_capacity(traj.len()),
        v_total: Vec::with_capacity(traj.len()),
        delta: Vec::with_capacity(traj.len()),
        mu,
        tol_zero: tol,
        mu_above,
        mu_below,
        lambdas: spec.lambdas.clone(),
    };
    for (f, c) in traj.frames.iter().zip(&traj.coeffs) {
        let mut sums = [0.0; 3];
        for (ci, l) in c.iter().zip(&spec.lambdas) {
            sums[(bucket(*l) + 1) as usize] += ci * ci;
        }
        out.v_minus.push(sums[0].sqrt());
        out.v_zero.push(sums[1].sqrt());
        out.v_plus.push(sums[2].sqrt());
        out.v_total.push(weighted_inner(&spec.log_mass, f, f).max(0.0).sqrt());
        out.delta.push(c2_proxy(energy, f));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSystemConfig {
    /// Largest acceptable constant in front of δ(s)V.
    pub c_max: f64,
    /// Length of the reporting windows.
    pub window: f64,
    /// Only samples with s ≤ s_max are judged.
    pub s_max: f64,
    /// Stencil slack, relative to V.
    pub eps: f64,
}

impl Default for ModeSystemConfig {
    fn default() -> Self {
        ModeSystemConfig { c_max: 10.0, window: 1.0, s_max: 0.0, eps: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub start: f64,
    pub end: f64,
    /// Constants needed by the plus, neutral and minus inequalities.
    pub constants: [f64; 3],
    pub pass: [bool; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSystemReport {
    pub windows: Vec<WindowVerdict>,
    pub max_constants: [f64; 3],
    pub pass: bool,
    /// Start times of failing windows.
    pub failures: Vec<f64>,
}

/// Central derivative of a positive sampled magnitude, taken through log V so
/// that pure exponentials are differentiated exactly.
fn magnitude_derivative(t: &[f64], v: &[f64], k: usize) -> f64 {
    let (a, b) = match k {
        0 => (0, 1),
        _ if k + 1 == t.len() => (k - 1, k),
        _ => (k - 1, k + 1),
    };
    let dt = t[b] - t[a];
    if v[a] > 0.0 && v[b] > 0.0 && v[k] > 0.0 {
        v[k] * (v[b].ln() - v[a].ln()) / dt
    } else {
        (v[b] - v[a]) / dt
    }
}

/// Checks V₊′ + μ̄V₊ ≤ CδV, |V₀′ + μV₀| ≤ CδV and V₋′ + μ̲V₋ ≥ −CδV, reporting
/// the constant C each window needs.
pub fn check_mode_system(mt: &ModeTrajectory, cfg: &ModeSystemConfig) -> ModeSystemReport {
    let t = &mt.times;
    let mut per_sample: Vec<(f64, [f64; 3])> = Vec::new();
    if t.len() >= 2 {
        for k in 0..t.len() {
            if t[k] > cfg.s_max + 1e-12 {
                continue;
            }
            let scale = mt.delta[k] * mt.v_total[k];
            let slack = cfg.eps * mt.v_total[k];
            let need = |excess: f64| -> f64 {
                let e = excess - slack;
                if e <= 0.0 {
                    0.0
                } else if scale > 0.0 {
                    e / scale
                } else {
                    f64::INFINITY
                }
            };
            let plus = match mt.mu_above {
                Some(m) => need(magnitude_derivative(t, &mt.v_plus, k) + m * mt.v_plus[k]),
                None => 0.0,
            };
            let zero = need((magnitude_derivative(t, &mt.v_zero, k) + mt.mu * mt.v_zero[k]).abs());
            let minus = match mt.mu_below {
                Some(m) => need(-(magnitude_derivative(t, &mt.v_minus, k) + m * mt.v_minus[k])),
                None => 0.0,
            };
            per_sample.push((t[k], [plus, zero, minus]));
        }
    }
    let mut windows: Vec<WindowVerdict> = Vec::new();
    if let Some(first) = per_sample.first().map(|p| p.0) {
        for (s, c) in &per_sample {
            let idx = ((s - first) / cfg.window).floor() as usize;
            while windows.len() <= idx {
                let start = first + windows.len() as f64 * cfg.window;
                windows.push(WindowVerdict { start, end: start + cfg.window, constants: [0.0; 3], pass: [true; 3] });
            }
            let w = &mut windows[idx];
            for i in 0..3 {
                w.constants[i] = w.constants[i].max(c[i]);
            }
        }
    }
    let mut max_constants = [0.0f64; 3];
    let mut failures = Vec::new();
    for w in windows.iter_mut() {
        for i in 0..3 {
            w.pass[i] = w.constants[i] <= cfg.c_max;
            max_constants[i] = max_constants[i].max(w.constants[i]);
        }
        if w.pass.iter().any(|p| !p) {
            failures.push(w.start);
        }
    }
    ModeSystemReport { pass: failures.is_empty() && !windows.is_empty(), windows, max_constants, failures }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of log δ against s.
    pub exponent: f64,
    pub intercept: f64,
    /// RMS misfit of log δ.
    pub residual: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Log-linear fit of δ(s) over the earliest half of the time range.
pub fn fit_decay_rate(mt: &ModeTrajectory) -> Result<DecayFit> {
    let (Some(&s0), Some(&s1)) = (mt.times.first(), mt.times.last()) else {
        return Err(LabError::Window("empty trajectory".into()));
    };
    let mid = 0.5 * (s0 + s1);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        mt.times.iter().zip(&mt.delta).filter(|(s, d)| **s <= mid && **d > 1e-12).map(|(s, d)| (*s, d.ln())).unzip();
    if xs.len() < 10 {
        return Err(LabError::Window(format!("{} usable frames in [{s0}, {mid}], need 10", xs.len())));
    }
    let (slope, intercept) = linear_fit(&xs, &ys).ok_or_else(|| LabError::Window("degenerate time window".into()))?;
    if slope.abs() < 1e-6 {
        return Err(LabError::Window(format!("no decay in [{s0}, {mid}] (slope {slope:e})")));
    }
    let residual =
        (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    Ok(DecayFit { exponent: slope, intercept, residual, samples: xs.len(), window: (s0, mid) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MzTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub eps: f64,
}

impl MzTrajectory {
    pub fn new(times: Vec<f64>, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, eps: f64) -> Result<Self> {
        let n = times.len();
        if x.len() != n || y.len() != n || z.len() != n {
            return Err(LabError::InvalidInput("x, y, z and times differ in length".into()));
        }
        if n < 2 {
            return Err(LabError::InvalidInput("need at least two samples".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times[n - 1] > 0.0 {
            return Err(LabError::InvalidInput("times must increase and end at or before 0".into()));
        }
        for k in 0..n {
            if !(x[k] >= 0.0 && y[k] >= 0.0 && z[k] >= 0.0) {
                return Err(LabError::InvalidInput(format!("negative sample at s = {}", times[k])));
            }
            if !(x[k] + y[k] + z[k] > 0.0) {
                return Err(LabError::InvalidInput(format!("x + y + z vanishes at s = {}", times[k])));
            }
        }
        if !(eps > 0.0) {
            return Err(LabError::InvalidInput("eps must be positive".into()));
        }
        Ok(MzTrajectory { times, x, y, z, eps })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branch {
    /// z ≤ 8εx on every sample before s_star.
    First {
        s_star: f64,
    },
    /// x ≤ cεz everywhere.
    Second {
        c: f64,
    },
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MzVerdict {
    pub hypotheses_ok: bool,
    /// Sample times where a differential inequality fails.
    pub violations: Vec<f64>,
    /// min y over the earliest tenth of the samples.
    pub liminf_proxy: f64,
    pub liminf_ok: bool,
    pub y_bound_ok: Option<bool>,
    /// max y / (2ε(x+z)).
    pub y_ratio: Option<f64>,
    pub branch: Branch,
}

/// Threshold for the liminf surrogate.
pub const LIMINF_TOL: f64 = 1e-8;

/// Earliest decade of samples, at least one.
fn early(n: usize) -> usize {
    (n / 10).max(1)
}

pub fn mz_check(t: &MzTrajectory) -> MzVerdict {
    let n = t.len();
    let e = t.eps;
    let (x, y, z) = (&t.x, &t.y, &t.z);
    let mut violations = Vec::new();
    for k in 0..n - 1 {
        let ds = t.times[k + 1] - t.times[k];
        let (dx, dy, dz) = ((x[k + 1] - x[k]) / ds, (y[k + 1] - y[k]) / ds, (z[k + 1] - z[k]) / ds);
        // rounding in the quotients, relative to the sample size
        let slack = 1e-9 * (x[k] + y[k] + z[k] + x[k + 1] + y[k + 1] + z[k + 1]) / ds.min(1.0);
        let ok = dx.abs() <= e * (x[k] + y[k] + z[k]) + slack
            && dy + y[k] <= e * (x[k] + z[k]) + slack
            && dz - z[k] >= -e * (x[k] + y[k]) - slack;
        if !ok {
            violations.push(t.times[k]);
        }
    }
    let liminf_proxy = y[..early(n)].iter().copied().fold(f64::INFINITY, f64::min);
    let liminf_ok = liminf_proxy <= LIMINF_TOL;
    let hypotheses_ok = violations.is_empty() && liminf_ok;
    if !hypotheses_ok {
        return MzVerdict {
            hypotheses_ok,
            violations,
            liminf_proxy,
            liminf_ok,
            y_bound_ok: None,
            y_ratio: None,
            branch: Branch::None,
        };
    }
    let mut y_ratio = 0.0f64;
    let mut y_ok = true;
    for k in 0..n {
        let bound = 2.0 * e * (x[k] + z[k]);
        if y[k] > bound + 1e-12 * (x[k] + y[k] + z[k]) {
            y_ok = false;
        }
        y_ratio = y_ratio.max(if bound > 0.0 {
            y[k] / bound
        } else if y[k] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    // first branch if z ≤ 8εx holds from the start through the earliest decade
    let first_fail = (0..n).find(|&k| z[k] > 8.0 * e * x[k]);
    let branch = match first_fail {
        None => Branch::First { s_star: t.times[n - 1] },
        Some(k) if k >= early(n) => Branch::First { s_star: t.times[k] },
        _ => {
            let c = (0..n)
                .map(|k| {
                    if x[k] == 0.0 {
                        0.0
                    } else if z[k] > 0.0 {
                        x[k] / (e * z[k])
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max);
            if c.is_finite() {
                Branch::Second { c }
            } else {
                Branch::None
            }
        }
    };
    MzVerdict {
        hypotheses_ok,
        violations,
        liminf_proxy,
        liminf_ok,
        y_bound_ok: Some(y_ok),
        y_ratio: Some(y_ratio),
        branch,
    }
}

/// Step of the synthesized trajectories.
pub const MZ_STEP: f64 = 0.01;

/// Draw in [0, 1] that lands on an end point 40% of the time, to push the
/// inequalities to equality.
fn extreme_unit(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 | 1 => 0.0,
        2 | 3 => 1.0,
        _ => rng.gen::<f64>(),
    }
}

/// Forward Euler integration on [s_min, 0] of random derivatives chosen inside
/// the three inequalities, starting from y = 0.
pub fn mz_synthesize(seed: u64, eps: f64, s_min: f64) -> Result<MzTrajectory> {
    if !(eps > 0.0 && eps < 1.0) || !(s_min < 0.0) {
        return Err(LabError::InvalidInput("need 0 < eps < 1 and s_min < 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (-s_min / MZ_STEP).round().max(1.0) as usize;
    let ds = -s_min / steps as f64;
    let mut x = rng.gen_range(0.1..1.0);
    // z starts anywhere from far below εx to order one
    let mut z = x * 10f64.powf(rng.gen_range(-4.0..0.5));
    let mut y = 0.0;
    let (mut ts, mut xs, mut ys, mut zs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..=steps {
        ts.push(if k == steps { 0.0 } else { s_min + k as f64 * ds });
        xs.push(x);
        ys.push(y);
        zs.push(z);
        if k == steps {
            break;
        }
        let dx = (eps * (x + y + z) * (2.0 * extreme_unit(&mut rng) - 1.0)).max(-x / ds);
        let dy = eps * (x + z) * extreme_unit(&mut rng) - y * (1.0 + extreme_unit(&mut rng));
        let dz = (z * (1.0 + extreme_unit(&mut rng)) - eps * (x + y) * extreme_unit(&mut rng)).max(-z / ds);
        x = (x + ds * dx).max(0.0);
        y = (y + ds * dy).max(0.0);
        z = (z + ds * dz).max(0.0);
    }
    MzTrajectory::new(ts, xs, ys, zs, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSweepRow {
    pub eps: f64,
    pub runs: usize,
    pub y_bound_failures: usize,
    pub max_y_ratio: f64,
}

/// Empirical failure threshold of the y bound as ε grows.
pub fn mz_eps_sweep(eps_values: &[f64], seeds: u64, s_min: f64) -> Result<Vec<EpsSweepRow>> {
    eps_values
        .iter()
        .map(|&eps| {
            let mut row = EpsSweepRow { eps, runs: 0, y_bound_failures: 0, max_y_ratio: 0.0 };
            for seed in 0..seeds {
                let v = mz_check(&mz_synthesize(seed, eps, s_min)?);
                row.runs += 1;
                if v.y_bound_ok != Some(true) {
                    row.y_bound_failures += 1;
                }
                row.max_y_ratio = row.max_y_ratio.max(v.y_ratio.unwrap_or(f64::INFINITY));
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_derivative_is_exact_for_exponentials() {
        let t: Vec<f64> = (0..20).map(|k| -2.0 + 0.1 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|s| (0.7 * s).exp()).collect();
        for k in 0..t.len() {
            assert!((magnitude_derivative(&t, &v, k) - 0.7 * v[k]).abs() < 1e-13 * v[k].max(1.0));
        }
    }

    #[test]
    fn synthesized_runs_start_at_zero_y() {
        let t = mz_synthesize(3, 0.01, -5.0).unwrap();
        assert_eq!(t.y[0], 0.0);
        assert_eq!(*t.times.last().unwrap(), 0.0);
        assert_eq!(t.len(), 501);
    }
}

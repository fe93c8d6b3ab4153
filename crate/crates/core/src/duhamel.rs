//! Mode-wise solution of ∂_s v = L v + h on (−∞, 0] with prescribed
//! unstable-mode data at s = 0.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::graph_energy::GraphEnergy;
use crate::numeric::{compensated_sum, solve_tridiagonal, weighted_inner};
use crate::spectral::SpectralData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Duhamel,
    Ancient,
    Flow,
}

/// Time-stamped graph functions over a fixed expander with their mode coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    pub coeffs: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, frames: Vec<Vec<f64>>, spec: &SpectralData, provenance: Provenance) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(LabError::InvalidInput("times and frames differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::InvalidInput("times must be strictly increasing".into()));
        }
        let basis = ModeBasis::new(spec);
        let coeffs = frames.iter().map(|f| basis.coefficients(f)).collect::<Result<Vec<_>>>()?;
        Ok(Trajectory { times, frames, coeffs, provenance })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Frame at time s by linear interpolation between recorded frames.
    pub fn frame_at(&self, s: f64) -> Result<Vec<f64>> {
        let first = *self.times.first().ok_or_else(|| LabError::InvalidInput("empty trajectory".into()))?;
        let last = *self.times.last().unwrap();
        if s < first - 1e-12 || s > last + 1e-12 {
            return Err(LabError::InvalidInput(format!("time {s} outside [{first}, {last}]")));
        }
        let k = match self.times.iter().position(|t| *t >= s) {
            Some(0) => return Ok(self.frames[0].clone()),
            Some(k) => k,
            None => return Ok(self.frames[self.len() - 1].clone()),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (s - t0) / (t1 - t0);
        Ok(self.frames[k - 1].iter().zip(&self.frames[k]).map(|(a, b)| (1.0 - w) * a + w * b).collect())
    }

    /// Index of the recorded time closest to s.
    pub fn nearest(&self, s: f64) -> usize {
        (0..self.len())
            .min_by(|a, b| (self.times[*a] - s).abs().partial_cmp(&(self.times[*b] - s).abs()).unwrap())
            .unwrap_or(0)
    }
}

/// Unstable-mode data and decay rates of the inhomogeneity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeData {
    pub a: Vec<f64>,
    pub delta: f64,
    pub delta_prime: f64,
}

impl ModeData {
    /// δ′ = 0.9·min{δ, −λ_I}; with I = 0 only δ bounds it.
    pub fn new(spec: &SpectralData, a: Vec<f64>, delta: f64) -> Result<Self> {
        if a.len() != spec.index {
            return Err(LabError::InvalidInput(format!("{} unstable-mode values for index {}", a.len(), spec.index)));
        }
        if !(delta > 0.0) {
            return Err(LabError::InvalidInput("inhomogeneity decay rate must be positive (tail too fat)".into()));
        }
        let cap = if spec.index > 0 { delta.min(-spec.lambdas[spec.index - 1]) } else { delta };
        if !(cap > 0.0) {
            return Err(LabError::InvalidInput("empty window for the derived decay rate".into()));
        }
        Ok(ModeData { a, delta, delta_prime: 0.9 * cap })
    }
}

/// Eigenfunctions premultiplied by the lumped masses, so that projection is a
/// plain dot product.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    weighted: Vec<Vec<f64>>,
}

impl ModeBasis {
    pub fn new(spec: &SpectralData) -> Self {
        let weighted = spec
            .phis
            .iter()
            .map(|phi| {
                phi.iter()
                    .zip(&spec.log_mass)
                    .map(|(p, lm)| if *p == 0.0 { 0.0 } else { p.signum() * (p.abs().ln() + lm).exp() })
                    .collect()
            })
            .collect();
        ModeBasis { weighted }
    }

    pub fn coefficients(&self, v: &[f64]) -> Result<Vec<f64>> {
        let len = self.weighted.first().map_or(v.len(), |w| w.len());
        if v.len() != len {
            return Err(LabError::GridMismatch { expected: len, got: v.len() });
        }
        Ok(self.weighted.iter().map(|w| compensated_sum(w.iter().zip(v).map(|(a, b)| a * b))).collect())
    }
}

/// Coefficients ⟨v, φ_i⟩_W and the unresolved norm ‖v − Σ c_i φ_i‖_W.
pub fn project_modes(v: &[f64], spec: &SpectralData) -> Result<(Vec<f64>, f64)> {
    if v.len() != spec.log_mass.len() {
        return Err(LabError::GridMismatch { expected: spec.log_mass.len(), got: v.len() });
    }
    let c: Vec<f64> = spec.phis.iter().map(|phi| weighted_inner(&spec.log_mass, v, phi)).collect();
    let rest = subtract_modes(v, &c, spec);
    Ok((c, weighted_inner(&spec.log_mass, &rest, &rest).max(0.0).sqrt()))
}

fn subtract_modes(v: &[f64], c: &[f64], spec: &SpectralData) -> Vec<f64> {
    let mut rest = v.to_vec();
    for (ci, phi) in c.iter().zip(&spec.phis) {
        rest.iter_mut().zip(phi).for_each(|(r, p)| *r -= ci * p);
    }
    rest
}

/// Σ c_i φ_i.
pub fn synthesize(c: &[f64], spec: &SpectralData) -> Vec<f64> {
    let mut out = vec![0.0; spec.log_mass.len()];
    for (ci, phi) in c.iter().zip(&spec.phis) {
        if *ci != 0.0 {
            out.iter_mut().zip(phi).for_each(|(o, p)| *o += ci * p);
        }
    }
    out
}

/// τ_−(a)(s) = Σ_{i≤I} a_i e^{−λ_i s} φ_i.
pub fn tau_minus(spec: &SpectralData, a: &[f64], s: f64) -> Result<Vec<f64>> {
    if spec.index == 0 {
        return Err(LabError::StableBase);
    }
    if a.len() != spec.index {
        return Err(LabError::InvalidInput(format!("{} values for index {}", a.len(), spec.index)));
    }
    let c: Vec<f64> = a.iter().zip(&spec.lambdas).map(|(ai, l)| ai * (-l * s).exp()).collect();
    Ok(synthesize(&c, spec))
}

/// φ₁(−z) = (1 − e^{−z})/z and φ₂(−z) = (e^{−z} − 1 + z)/z² for z ≥ 0.
fn phi12(z: f64) -> (f64, f64) {
    if z.abs() < 1e-3 {
        let p1 = 1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0 + z.powi(4) / 120.0;
        let p2 = 0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0 + z.powi(4) / 720.0;
        (p1, p2)
    } else {
        let em = (-z).exp_m1();
        (-em / z, (em + z) / (z * z))
    }
}

/// Mode coefficients of the Duhamel solution on `times` (ascending, ending at
/// 0 when unstable modes are present). `h[k][i]` is mode i of the
/// inhomogeneity at `times[k]`; `delta` is its backward decay rate, used for
/// the tail before the first time.
pub fn solve_linear_modes(
    lambdas: &[f64],
    index: usize,
    a: &[f64],
    h: &[Vec<f64>],
    times: &[f64],
    delta: f64,
) -> Result<Vec<Vec<f64>>> {
    let kt = times.len();
    if kt < 2 || h.len() != kt {
        return Err(LabError::InvalidInput("need at least two times and matching inhomogeneity samples".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::InvalidInput("times must be strictly increasing".into()));
    }
    if index > 0 && times[kt - 1].abs() > 1e-12 {
        return Err(LabError::InvalidInput("the last time must be 0 when unstable modes are present".into()));
    }
    if a.len() != index {
        return Err(LabError::InvalidInput(format!("{} values for index {index}", a.len())));
    }
    let lmax = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let dmax = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if lmax * dmax > 1e4 {
        return Err(LabError::InvalidInput(format!("time grid too coarse for mode rate {lmax}")));
    }
    let modes = lambdas.len();
    let mut out = vec![vec![0.0; modes]; kt];
    for (i, &lam) in lambdas.iter().enumerate() {
        if i < index {
            // backward from s = 0: v(s_k) = e^{λΔ} v(s_{k+1}) − ∫ e^{λ(σ−s_k)} h
            let mut v = a[i];
            out[kt - 1][i] = v;
            for k in (0..kt - 1).rev() {
                let dt = times[k + 1] - times[k];
                let z = -lam * dt;
                let (p1, p2) = phi12(z);
                let integral = dt * (p2 * h[k][i] + (p1 - p2) * h[k + 1][i]);
                v = (lam * dt).exp() * v - integral;
                out[k][i] = v;
            }
        } else {
            if !(lam + delta > 0.0) {
                return Err(LabError::InvalidInput("inhomogeneity tail too fat for a neutral mode".into()));
            }
            let mut v = h[0][i] / (lam + delta);
            out[0][i] = v;
            for k in 0..kt - 1 {
                let dt = times[k + 1] - times[k];
                let z = lam * dt;
                let (p1, p2) = phi12(z);
                let integral = dt * ((p1 - p2) * h[k][i] + p2 * h[k + 1][i]);
                v = (-z).exp() * v + integral;
                out[k + 1][i] = v;
            }
        }
    }
    Ok(out)
}

/// Response to the part of the forcing orthogonal to the computed modes.
/// Those components relax at rates beyond the last computed eigenvalue, so
/// backward Euler on the full operator is accurate and stable; the start
/// value is the quasi-static tail (−L + δ)⁻¹ h.
pub fn remainder_response(energy: &GraphEnergy, rest: &[Vec<f64>], times: &[f64], delta: f64) -> Result<Vec<Vec<f64>>> {
    let act = energy.active();
    let (sub, diag, sup) = energy.operator_rows();
    let solve = |shift: f64, scale: f64, rhs: &[f64]| -> Result<Vec<f64>> {
        let d: Vec<f64> = diag.iter().map(|x| shift + scale * x).collect();
        let b: Vec<f64> = sub.iter().map(|x| scale * x).collect();
        let c: Vec<f64> = sup.iter().map(|x| scale * x).collect();
        let r: Vec<f64> = act.clone().map(|j| rhs[j]).collect();
        let x = solve_tridiagonal(&b, &d, &c, &r)
            .ok_or_else(|| LabError::Degenerate("singular remainder system".into()))?;
        let mut out = vec![0.0; rhs.len()];
        for (i, j) in act.clone().enumerate() {
            out[j] = x[i];
        }
        Ok(out)
    };
    let mut out = Vec::with_capacity(times.len());
    let mut u = solve(delta, 1.0, &rest[0])?;
    out.push(u.clone());
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let rhs: Vec<f64> = u.iter().zip(&rest[k]).map(|(a, b)| a + dt * b).collect();
        u = solve(1.0, dt, &rhs)?;
        out.push(u.clone());
    }
    Ok(out)
}

/// Duhamel solution with inhomogeneity given as frames on `times`. With an
/// energy supplied, the forcing outside the computed modes is propagated by
/// `remainder_response`; otherwise it is dropped.
pub fn solve_linear(
    spec: &SpectralData,
    data: &ModeData,
    h_frames: &[Vec<f64>],
    times: &[f64],
    full: Option<&GraphEnergy>,
) -> Result<Trajectory> {
    let basis = ModeBasis::new(spec);
    let h: Vec<Vec<f64>> = h_frames.iter().map(|f| basis.coefficients(f)).collect::<Result<_>>()?;
    let coeffs = solve_linear_modes(&spec.lambdas, spec.index, &data.a, &h, times, data.delta)?;
    let mut frames: Vec<Vec<f64>> = coeffs.iter().map(|c| synthesize(c, spec)).collect();
    if let Some(energy) = full {
        let rest: Vec<Vec<f64>> = h_frames.iter().zip(&h).map(|(f, c)| subtract_modes(f, c, spec)).collect();
        let u = remainder_response(energy, &rest, times, data.delta)?;
        for (f, r) in frames.iter_mut().zip(&u) {
            f.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
    }
    Ok(Trajectory { times: times.to_vec(), frames, coeffs, provenance: Provenance::Duhamel })
}

/// Default backward horizon: the tail factor e^{−(λ_{I+K+1}+δ) S} drops below 1e−12.
pub fn default_horizon(spec: &SpectralData, delta: f64) -> f64 {
    let first_stable = spec.lambdas.get(spec.index + spec.nullity).copied().unwrap_or(1.0);
    12.0 * std::f64::consts::LN_10 / (first_stable + delta).max(1e-3)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuhamelEstimate {
    pub delta_prime: f64,
    pub sup_weighted_deviation: f64,
    pub forcing_norm: f64,
    pub constant: f64,
}

/// Empirical constant C in sup e^{−δ′s}‖v − τ_−(a)‖_W ≤ C (∫ e^{−2δσ}‖h‖²_W dσ)^{1/2}.
pub fn duhamel_estimate(
    traj: &Trajectory,
    spec: &SpectralData,
    data: &ModeData,
    h_frames: &[Vec<f64>],
) -> Result<DuhamelEstimate> {
    let mut sup = 0.0f64;
    for (s, f) in traj.times.iter().zip(&traj.frames) {
        let diff = if spec.index > 0 {
            let tau = tau_minus(spec, &data.a, *s)?;
            f.iter().zip(&tau).map(|(a, b)| a - b).collect()
        } else {
            f.clone()
        };
        let nrm = weighted_inner(&spec.log_mass, &diff, &diff).max(0.0).sqrt();
        sup = sup.max((-data.delta_prime * s).exp() * nrm);
    }
    let mut acc = 0.0;
    for k in 0..traj.len().saturating_sub(1) {
        let g = |j: usize| {
            let f = &h_frames[j];
            (-2.0 * data.delta * traj.times[j]).exp() * weighted_inner(&spec.log_mass, f, f)
        };
        acc += 0.5 * (traj.times[k + 1] - traj.times[k]) * (g(k) + g(k + 1));
    }
    let forcing_norm = acc.sqrt();
    let constant = if forcing_norm > 0.0 { sup / forcing_norm } else { 0.0 };
    Ok(DuhamelEstimate { delta_prime: data.delta_prime, sup_weighted_deviation: sup, forcing_norm, constant })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearResidualReport {
    /// W-norm of the central-difference residual at each interior time (0 at the ends).
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub worst_time: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Central-difference check of ∂_s v = L v + h on recorded frames.
/// PASS iff the residual stays below `tol·(Δs² + spacing²)·max(1, sup‖v‖_W)`.
pub fn verify_linear_residual(
    traj: &Trajectory,
    h_frames: &[Vec<f64>],
    op: &crate::spectral::StabilityOperator,
    tol: f64,
) -> Result<LinearResidualReport> {
    let k = traj.len();
    if k < 3 || h_frames.len() != k {
        return Err(LabError::InvalidInput("need at least three frames with matching forcing".into()));
    }
    let e = &op.energy;
    let mut residuals = vec![0.0; k];
    let mut vmax = 0.0f64;
    let mut dmax = 0.0f64;
    for j in 1..k - 1 {
        let (t0, t1, t2) = (traj.times[j - 1], traj.times[j], traj.times[j + 1]);
        let (f0, f1, f2) = (&traj.frames[j - 1], &traj.frames[j], &traj.frames[j + 1]);
        let (a, b) = (t1 - t0, t2 - t1);
        let lv = op.apply(f1);
        let r: Vec<f64> = (0..f1.len())
            .map(|i| {
                let dv = (a * a * (f2[i] - f1[i]) + b * b * (f1[i] - f0[i])) / (a * b * (a + b));
                dv - lv[i] - h_frames[j][i]
            })
            .collect();
        residuals[j] = e.norm(&e.pin(&r));
        vmax = vmax.max(e.norm(f1));
        dmax = dmax.max(a.max(b));
    }
    let (mut max_residual, mut worst) = (0.0, 0);
    for (j, r) in residuals.iter().enumerate() {
        if *r > max_residual {
            max_residual = *r;
            worst = j;
        }
    }
    let spacing = e.base().spacing;
    let threshold = tol * (dmax * dmax + spacing * spacing) * vmax.max(1.0);
    Ok(LinearResidualReport {
        residuals,
        max_residual,
        worst_time: traj.times[worst],
        threshold,
        pass: max_residual <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_agree_across_branches() {
        for z in [9.9e-4, 1.1e-3] {
            let (a, b) = phi12(z);
            let em = (-z).exp_m1();
            assert!((a + em / z).abs() < 1e-12);
            assert!((b - (em + z) / (z * z)).abs() < 1e-7);
        }
    }

    #[test]
    fn stable_mode_closed_form() {
        let times: Vec<f64> = (0..=20000).map(|k| -20.0 + k as f64 * 1e-3).collect();
        let (lam, rho) = (1.7, 0.8);
        let h: Vec<Vec<f64>> = times.iter().map(|s| vec![(rho * s).exp()]).collect();
        let c = solve_linear_modes(&[lam], 0, &[], &h, &times, rho).unwrap();
        for (s, ci) in times.iter().zip(&c) {
            let exact = (rho * s).exp() / (lam + rho);
            assert!((ci[0] - exact).abs() <= 1e-6 * exact);
        }
    }
}

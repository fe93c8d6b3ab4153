//! Ancient rescaled flows leaving an unstable expander, built by fixed-point
//! iteration of the Duhamel solution operator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duhamel::{
    remainder_response, solve_linear_modes, synthesize, tau_minus, ModeBasis, Provenance, Trajectory,
};
use crate::error::{LabError, Result};
use crate::graph_energy::GraphEnergy;
use crate::spectral::SpectralData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AncientParams {
    pub a: Vec<f64>,
    /// Weight rate in the fixed-point norm, inside (0, −λ_I).
    pub delta0: f64,
    /// Closeness constant target.
    pub beta: f64,
    /// Backward horizon; `None` picks the time where ‖τ_−(a)‖_W drops below 1e−10.
    pub s_back: Option<f64>,
    pub ds: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Bound on ‖a‖.
    pub eps: f64,
}

impl AncientParams {
    pub fn new(spec: &SpectralData, a: Vec<f64>) -> Result<Self> {
        if spec.index == 0 {
            return Err(LabError::StableBase);
        }
        let p = AncientParams {
            a,
            delta0: -0.5 * spec.lambdas[spec.index - 1],
            beta: 10.0,
            s_back: None,
            ds: 0.02,
            tol: 1e-13,
            max_iter: 40,
            eps: 0.05,
        };
        p.validate(spec)?;
        Ok(p)
    }

    pub fn validate(&self, spec: &SpectralData) -> Result<()> {
        if spec.index == 0 {
            return Err(LabError::StableBase);
        }
        if self.a.len() != spec.index {
            return Err(LabError::InvalidInput(format!("{} values for index {}", self.a.len(), spec.index)));
        }
        let gap = -spec.lambdas[spec.index - 1];
        if !(self.delta0 > 0.0 && self.delta0 < gap) {
            return Err(LabError::InvalidInput(format!("delta0 = {} must lie in (0, {gap})", self.delta0)));
        }
        let norm = self.a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > self.eps {
            return Err(LabError::InvalidInput(format!("|a| = {norm} exceeds eps = {}", self.eps)));
        }
        if let Some(s) = self.s_back {
            if !(s > 0.0) {
                return Err(LabError::InvalidInput("s_back must be positive".into()));
            }
        }
        if !(self.ds > 0.0 && self.tol > 0.0) || self.max_iter == 0 {
            return Err(LabError::InvalidInput("ds, tol and max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Horizon actually used: the requested one, or where ‖τ_−(a)‖_W < 1e−10, capped at 60.
    pub fn horizon(&self, spec: &SpectralData) -> f64 {
        if let Some(s) = self.s_back {
            return s;
        }
        let norm = self.a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 {
            return self.ds;
        }
        // slowest backward decay among the modes carrying data
        let rate =
            self.a.iter().zip(&spec.lambdas).filter(|(a, _)| **a != 0.0).map(|(_, l)| -l).fold(f64::INFINITY, f64::min);
        ((norm / 1e-10).ln() / rate).min(60.0)
    }
}

/// Nonlinear remainder of the graph flow: ∂_s v = L v + Q(v).
pub fn evaluate_q(energy: &GraphEnergy, v: &[f64]) -> Result<Vec<f64>> {
    let vel = energy.velocity(v)?;
    let lv = energy.apply_linear(v);
    Ok(vel.iter().zip(&lv).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AncientRun {
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// sup_s e^{−δ0 s}‖v_{k+1} − v_k‖_W for each iteration.
    pub increments: Vec<f64>,
    /// Ratios of consecutive increments.
    pub contraction: Vec<f64>,
    pub s_back: f64,
    pub delta0: f64,
}

fn time_grid(s_back: f64, ds: f64) -> Vec<f64> {
    let k = (s_back / ds).ceil().max(1.0) as usize;
    (0..=k).map(|i| -((k - i) as f64) * ds).collect()
}

/// Fixed-point iteration v ↦ solve_linear(a, Q(v)) from v_0 = τ_−(a).
pub fn construct_ancient(energy: &GraphEnergy, spec: &SpectralData, params: &AncientParams) -> Result<AncientRun> {
    params.validate(spec)?;
    if spec.log_mass.len() != energy.len() {
        return Err(LabError::GridMismatch { expected: energy.len(), got: spec.log_mass.len() });
    }
    let s_back = params.horizon(spec);
    let times = time_grid(s_back, params.ds);
    let weight: Vec<f64> = times.iter().map(|s| (-params.delta0 * s).exp()).collect();
    let modes = spec.modes();
    let mut coeffs: Vec<Vec<f64>> = times
        .iter()
        .map(|s| {
            let mut c = vec![0.0; modes];
            for (i, ai) in params.a.iter().enumerate() {
                c[i] = ai * (-spec.lambdas[i] * s).exp();
            }
            c
        })
        .collect();
    let basis = ModeBasis::new(spec);
    let mut rest = vec![vec![0.0; energy.len()]; times.len()];
    let mut increments = Vec::new();
    let mut contraction = Vec::new();
    let mut iterations = 0;
    let zero = params.a.iter().all(|x| *x == 0.0);
    let frame = |c: &[f64], r: &[f64]| -> Vec<f64> {
        let mut f = synthesize(c, spec);
        f.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        f
    };
    if zero {
        iterations = 1;
        increments.push(0.0);
    } else {
        loop {
            iterations += 1;
            let parts: Vec<(Vec<f64>, Vec<f64>)> = coeffs
                .par_iter()
                .zip(rest.par_iter())
                .map(|(c, r)| {
                    let q = evaluate_q(energy, &frame(c, r))?;
                    let qc = basis.coefficients(&q)?;
                    let mut qr = q;
                    for (ci, phi) in qc.iter().zip(&spec.phis) {
                        qr.iter_mut().zip(phi).for_each(|(x, p)| *x -= ci * p);
                    }
                    Ok((qc, qr))
                })
                .collect::<Result<_>>()?;
            let (h, h_rest): (Vec<Vec<f64>>, Vec<Vec<f64>>) = parts.into_iter().unzip();
            let next = solve_linear_modes(&spec.lambdas, spec.index, &params.a, &h, &times, params.delta0)?;
            let next_rest = remainder_response(energy, &h_rest, &times, params.delta0)?;
            // modes are orthonormal and the remainder is orthogonal to them
            let inc = (0..times.len())
                .map(|k| {
                    let dc: f64 = next[k].iter().zip(&coeffs[k]).map(|(x, y)| (x - y) * (x - y)).sum();
                    let dr: Vec<f64> = next_rest[k].iter().zip(&rest[k]).map(|(x, y)| x - y).collect();
                    weight[k] * (dc + energy.inner(&dr, &dr)).max(0.0).sqrt()
                })
                .fold(0.0, f64::max);
            if let Some(prev) = increments.last() {
                contraction.push(if *prev > 0.0 { inc / prev } else { 0.0 });
            }
            increments.push(inc);
            coeffs = next;
            rest = next_rest;
            if inc < params.tol {
                break;
            }
            let factor = contraction.last().copied().unwrap_or(0.0);
            if iterations >= params.max_iter || (iterations > 2 && factor >= 1.0) {
                return Err(LabError::NoContraction { iterations, factor });
            }
        }
    }
    let frames: Vec<Vec<f64>> = coeffs.par_iter().zip(rest.par_iter()).map(|(c, r)| frame(c, r)).collect();
    for f in &frames {
        energy.admissible(f)?;
    }
    Ok(AncientRun {
        trajectory: Trajectory { times, frames, coeffs, provenance: Provenance::Ancient },
        iterations,
        increments,
        contraction,
        s_back,
        delta0: params.delta0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub beta_empirical: f64,
    pub delta0: f64,
    pub worst_time: f64,
    pub within_target: bool,
}

/// sup_s e^{−δ0 s}‖v(s) − τ_−(a)(s)‖_W / Σ a_i².
pub fn closeness_check(traj: &Trajectory, spec: &SpectralData, params: &AncientParams) -> Result<ClosenessReport> {
    let a2: f64 = params.a.iter().map(|x| x * x).sum();
    if a2 == 0.0 {
        return Ok(ClosenessReport {
            beta_empirical: 0.0,
            delta0: params.delta0,
            worst_time: 0.0,
            within_target: true,
        });
    }
    let mut best = (0.0, 0.0);
    for (s, f) in traj.times.iter().zip(&traj.frames) {
        let tau = tau_minus(spec, &params.a, *s)?;
        let d: Vec<f64> = f.iter().zip(&tau).map(|(x, y)| x - y).collect();
        let val =
            (-params.delta0 * s).exp() * crate::numeric::weighted_inner(&spec.log_mass, &d, &d).max(0.0).sqrt() / a2;
        if val > best.0 {
            best = (val, *s);
        }
    }
    Ok(ClosenessReport {
        beta_empirical: best.0,
        delta0: params.delta0,
        worst_time: best.1,
        within_target: best.0.is_finite() && best.0 <= params.beta,
    })
}

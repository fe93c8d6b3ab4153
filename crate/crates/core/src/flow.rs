//! Forward evolution of normal graphs over an expander under the rescaled flow.

use serde::{Deserialize, Serialize};

use crate::duhamel::{ModeBasis, Provenance, Trajectory};
use crate::error::{LabError, Result};
use crate::geometry::{normal_graph, ConeSpec, Nappe, ProfileCurve};
use crate::graph_energy::GraphEnergy;
use crate::numeric::solve_tridiagonal;
use crate::spectral::SpectralData;

/// Matrix used in the implicit part of each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Implicit {
    /// The stability operator of the base: (I − Δs L) v_new = v + Δs Q(v).
    Base,
    /// The Jacobian of the velocity at the start of the step.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Local error target (sup over nodes, absolute).
    pub atol: f64,
    pub rtol: f64,
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub implicit: Implicit,
    /// Singularity proxy: stop once max |A| exceeds 1/(factor · spacing).
    pub singularity_factor: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            atol: 1e-8,
            rtol: 0.0,
            ds_init: 1e-3,
            ds_min: 1e-10,
            ds_max: 0.2,
            implicit: Implicit::Base,
            singularity_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowState {
    pub v: Vec<f64>,
    pub s: f64,
    /// Step size proposed for the next step.
    pub ds: f64,
    pub last_error: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl FlowState {
    pub fn new(v: Vec<f64>, s: f64, ds: f64) -> Self {
        FlowState { v, s, ds, last_error: 0.0, accepted: 0, rejected: 0 }
    }
}

pub struct Flow<'a> {
    energy: &'a GraphEnergy,
    neg_l: (Vec<f64>, Vec<f64>, Vec<f64>),
    pub config: FlowConfig,
}

type Tridiagonal = (Vec<f64>, Vec<f64>, Vec<f64>);

impl<'a> Flow<'a> {
    pub fn new(energy: &'a GraphEnergy, config: FlowConfig) -> Result<Self> {
        if !(config.atol > 0.0 && config.rtol >= 0.0 && config.ds_min > 0.0 && config.ds_max >= config.ds_min) {
            return Err(LabError::InvalidInput("flow tolerances and step bounds must be positive".into()));
        }
        if !(config.ds_init > 0.0 && config.singularity_factor > 0.0) {
            return Err(LabError::InvalidInput("initial step and singularity factor must be positive".into()));
        }
        Ok(Flow { energy, neg_l: energy.operator_rows(), config })
    }

    pub fn energy(&self) -> &GraphEnergy {
        self.energy
    }

    pub fn initial_state(&self, v: Vec<f64>, s: f64) -> Result<FlowState> {
        self.energy.admissible(&v)?;
        Ok(FlowState::new(self.energy.pin(&v), s, self.config.ds_init))
    }

    /// −J on the active nodes, J the Jacobian of the velocity at v, by
    /// three-colour differences (the velocity couples nearest neighbours only).
    fn neg_jacobian(&self, v: &[f64], f0: &[f64]) -> Result<Tridiagonal> {
        let act = self.energy.active();
        let m = act.len();
        let (mut sub, mut diag, mut sup) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for colour in 0..3 {
            let mut w = v.to_vec();
            let mut eps = vec![0.0; v.len()];
            for j in act.clone().filter(|j| (j - act.start) % 3 == colour) {
                eps[j] = 1e-7 * v[j].abs().max(1e-2);
                w[j] += eps[j];
            }
            let f = self.energy.velocity(&w)?;
            for (i, j) in act.clone().enumerate() {
                let df = f[j] - f0[j];
                for (col, slot) in [(j.wrapping_sub(1), 0), (j, 1), (j + 1, 2)] {
                    if col < v.len() && act.contains(&col) && (col - act.start) % 3 == colour {
                        let d = -df / eps[col];
                        match slot {
                            0 => sub[i] = d,
                            1 => diag[i] = d,
                            _ => sup[i] = d,
                        }
                    }
                }
            }
        }
        Ok((sub, diag, sup))
    }

    /// One linearly implicit Euler step: v + Δs (I + Δs(−J))⁻¹ F(v).
    fn euler(&self, v: &[f64], f: &[f64], ds: f64, neg_j: &Tridiagonal) -> Result<Vec<f64>> {
        let act = self.energy.active();
        let (sub, diag, sup) = neg_j;
        let a: Vec<f64> = diag.iter().map(|d| 1.0 + ds * d).collect();
        let b: Vec<f64> = sub.iter().map(|x| ds * x).collect();
        let c: Vec<f64> = sup.iter().map(|x| ds * x).collect();
        let rhs: Vec<f64> = act.clone().map(|j| f[j]).collect();
        let k = solve_tridiagonal(&b, &a, &c, &rhs)
            .ok_or_else(|| LabError::Degenerate("singular implicit system".into()))?;
        let mut out = v.to_vec();
        for (i, j) in act.enumerate() {
            out[j] += ds * k[i];
        }
        Ok(out)
    }

    fn implicit_matrix(&self, v: &[f64], f: &[f64]) -> Result<Tridiagonal> {
        match self.config.implicit {
            Implicit::Base => Ok(self.neg_l.clone()),
            Implicit::Current => self.neg_jacobian(v, f),
        }
    }

    /// Max |A| of the graph of v.
    pub fn curvature_proxy(&self, v: &[f64]) -> Result<f64> {
        let c = normal_graph(self.energy.base(), v)?;
        Ok(c.a2.iter().fold(0.0f64, |m, x| m.max(x.abs().sqrt())))
    }

    pub fn curvature_limit(&self) -> f64 {
        1.0 / (self.config.singularity_factor * self.energy.base().spacing)
    }

    /// One accepted step of size at most `ds_cap` (step doubling with
    /// Richardson extrapolation for the error estimate).
    pub fn step_capped(&self, state: &FlowState, ds_cap: f64) -> Result<FlowState> {
        let v = &state.v;
        let f0 = self.energy.velocity(v)?;
        let mat = self.implicit_matrix(v, &f0)?;
        let mut ds = state.ds.min(ds_cap).min(self.config.ds_max);
        let mut rejected = state.rejected;
        loop {
            if ds < self.config.ds_min {
                let proxy = self
                    .curvature_proxy(v)
                    .map(|c| format!("curvature proxy {c:.4e}"))
                    .unwrap_or_else(|e| e.to_string());
                return Err(LabError::StepUnderflow { at: state.s, detail: proxy });
            }
            let attempt = (|| -> Result<(Vec<f64>, f64)> {
                let full = self.euler(v, &f0, ds, &mat)?;
                let half = self.euler(v, &f0, 0.5 * ds, &mat)?;
                let fh = self.energy.velocity(&half)?;
                let two = self.euler(&half, &fh, 0.5 * ds, &mat)?;
                let mut err = 0.0f64;
                let mut out = two.clone();
                for j in self.energy.active() {
                    let d = two[j] - full[j];
                    err = err.max(d.abs() / (self.config.atol + self.config.rtol * two[j].abs()));
                    out[j] = two[j] + d;
                }
                self.energy.admissible(&out)?;
                Ok((out, err))
            })();
            match attempt {
                Ok((out, err)) if err <= 1.0 => {
                    let grow = if err > 0.0 { (0.9 / err.sqrt()).clamp(0.2, 2.0) } else { 2.0 };
                    return Ok(FlowState {
                        v: out,
                        s: state.s + ds,
                        ds: (ds * grow).min(self.config.ds_max).max(state.ds.min(ds)),
                        last_error: err,
                        accepted: state.accepted + 1,
                        rejected,
                    });
                }
                Ok((_, err)) => {
                    rejected += 1;
                    ds *= (0.9 / err.sqrt()).clamp(0.1, 0.5);
                }
                Err(LabError::Inadmissible { .. }) => {
                    rejected += 1;
                    ds *= 0.25;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn step(&self, state: &FlowState) -> Result<FlowState> {
        self.step_capped(state, f64::INFINITY)
    }

    /// Steps to `s_end`, recording frames every `record_every` units of s.
    /// Mode coefficients are filled in when a spectrum is supplied.
    pub fn evolve(
        &self,
        state: FlowState,
        s_end: f64,
        record_every: f64,
        spec: Option<&SpectralData>,
    ) -> Result<(Trajectory, FlowState)> {
        if !(s_end > state.s) || !(record_every > 0.0) {
            return Err(LabError::InvalidInput("need s_end > s and a positive recording interval".into()));
        }
        let limit = self.curvature_limit();
        let mut times = vec![state.s];
        let mut frames = vec![state.v.clone()];
        let start = state.s;
        let mut k = 1usize;
        let mut st = state;
        loop {
            let target = (start + k as f64 * record_every).min(s_end);
            while st.s < target - 1e-12 {
                let keep = st.ds;
                st = self.step_capped(&st, target - st.s)?;
                if (st.s - target).abs() < 1e-12 {
                    st.s = target;
                    st.ds = st.ds.max(keep.min(self.config.ds_max));
                }
                let proxy = self.curvature_proxy(&st.v)?;
                if proxy > limit {
                    return Err(LabError::Singularity { at: st.s, curvature: proxy, limit });
                }
            }
            times.push(st.s);
            frames.push(st.v.clone());
            if target >= s_end {
                break;
            }
            k += 1;
        }
        let coeffs = match spec {
            Some(sp) => {
                let basis = ModeBasis::new(sp);
                frames.iter().map(|f| basis.coefficients(f)).collect::<Result<_>>()?
            }
            None => vec![Vec::new(); frames.len()],
        };
        Ok((Trajectory { times, frames, coeffs, provenance: Provenance::Flow }, st))
    }
}

/// Distance from a point of the (q, p) half plane to the rays of a cone.
pub fn distance_to_cone(cone: &ConeSpec, q: f64, p: f64) -> f64 {
    let norm = cone.slope.hypot(1.0);
    let rays: &[f64] = match cone.nappe {
        Nappe::Upper => &[1.0],
        Nappe::Lower => &[-1.0],
        Nappe::Both => &[1.0, -1.0],
    };
    rays.iter()
        .map(|sgn| {
            let d = [1.0 / norm, sgn * cone.slope / norm];
            let t = (q * d[0] + p * d[1]).max(0.0);
            (q - t * d[0]).hypot(p - t * d[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Hausdorff distance between a profile and its cone inside the annulus
/// r_in ≤ |x| ≤ r_out.
pub fn cone_hausdorff(curve_q: &[f64], curve_p: &[f64], cone: &ConeSpec, r_in: f64, r_out: f64) -> f64 {
    let inside = |q: f64, p: f64| {
        let r = q.hypot(p);
        r >= r_in && r <= r_out
    };
    let mut h = 0.0f64;
    for (q, p) in curve_q.iter().zip(curve_p) {
        if inside(*q, *p) {
            h = h.max(distance_to_cone(cone, *q, *p));
        }
    }
    let norm = cone.slope.hypot(1.0);
    let rays: &[f64] = match cone.nappe {
        Nappe::Upper => &[1.0],
        Nappe::Lower => &[-1.0],
        Nappe::Both => &[1.0, -1.0],
    };
    let samples = 200;
    for sgn in rays {
        for k in 0..=samples {
            let r = r_in + (r_out - r_in) * k as f64 / samples as f64;
            let (cq, cp) = (r / norm, sgn * cone.slope * r / norm);
            let d = curve_q.iter().zip(curve_p).map(|(q, p)| (q - cq).hypot(p - cp)).fold(f64::INFINITY, f64::min);
            h = h.max(d);
        }
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnrescaledFrame {
    pub t: f64,
    pub s: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Hausdorff distance to the cone in the annulus 5 ≤ |x| ≤ 10.
    pub cone_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnrescaledFlow {
    pub frames: Vec<UnrescaledFrame>,
    pub cone: ConeSpec,
    /// As t → 0 the unrescaled surfaces converge to the cone.
    pub initial_data: String,
}

/// Σ_t = √t · Σ̃_{log t} for each requested t, interpolating frames in s.
pub fn unrescale(traj: &Trajectory, base: &ProfileCurve, cone: &ConeSpec, t_values: &[f64]) -> Result<UnrescaledFlow> {
    let frames = t_values
        .iter()
        .map(|&t| {
            if !(t > 0.0) {
                return Err(LabError::InvalidInput(format!("time t = {t} must be positive")));
            }
            let s = t.ln();
            let v = traj.frame_at(s)?;
            let curve = normal_graph(base, &v)?;
            let scale = t.sqrt();
            let q: Vec<f64> = curve.q.iter().map(|x| x * scale).collect();
            let p: Vec<f64> = curve.p.iter().map(|x| x * scale).collect();
            let cone_distance = cone_hausdorff(&q, &p, cone, 5.0, 10.0);
            Ok(UnrescaledFrame { t, s, q, p, cone_distance })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnrescaledFlow { frames, cone: *cone, initial_data: "cone".into() })
}

/// Relative floor below which node values count as rounding noise in sign tests.
pub const SIGN_FLOOR: f64 = 1e-14;

/// Index of a node where sign·v is negative beyond the rounding floor.
pub fn sign_violation(v: &[f64], sign: f64, active: std::ops::Range<usize>) -> Option<usize> {
    let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = SIGN_FLOOR * sup;
    active.clone().find(|&j| sign * v[j] < -floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseConfig {
    pub amplitude: f64,
    /// +1 or −1: which side of the unstable expander to leave towards.
    pub sign: f64,
    pub flow: FlowConfig,
    pub s_max: f64,
    /// Stall threshold on sup |∂_s v|.
    pub stall_tol: f64,
    pub record_every: f64,
    /// Time step of the backward (ancient) part.
    pub ancient_ds: f64,
}

impl Default for MorseConfig {
    fn default() -> Self {
        MorseConfig {
            amplitude: 1e-3,
            sign: 1.0,
            flow: FlowConfig { implicit: Implicit::Current, rtol: 1e-6, ..FlowConfig::default() },
            s_max: 120.0,
            stall_tol: 1e-7,
            record_every: 0.5,
            ancient_ds: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorseLimit {
    pub s: f64,
    /// Sup of the pulled-back expander residual of the limiting graph.
    pub graph_residual: f64,
    /// Sup of the finite-difference expander residual of the limiting profile.
    pub profile_residual: f64,
    /// Lowest eigenvalue of −L on the limiting profile.
    pub lambda1: f64,
    /// Neck radius or axis height of the limit.
    pub parameter: f64,
    /// The same expander re-solved by shooting near the limit's parameter.
    pub polished_parameter: Option<f64>,
    pub polished_residual: Option<f64>,
    pub polished_lambda1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MorseOutcome {
    Converged(MorseLimit),
    SignLost { s: f64, node: usize },
    Singularity { s: f64, curvature: f64, limit: f64 },
    StepUnderflow { s: f64, detail: String },
    NotConverged { s: f64, velocity: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorseRun {
    pub ancient: Trajectory,
    pub forward: Trajectory,
    pub outcome: MorseOutcome,
    /// Sign preserved at every recorded frame (rounding floor applied).
    pub one_sided: bool,
}

fn limit_report(
    base: &crate::expander::ExpanderProfile,
    energy: &GraphEnergy,
    v: &[f64],
    s: f64,
) -> Result<MorseLimit> {
    use crate::expander::{match_neck, match_sheet, ShootingGrid, Topology};
    use crate::geometry::residual_norm;
    use crate::spectral::{assemble_stability, eigensolve};
    let res = energy.graph_residual(v)?;
    let graph_residual = energy.active().map(|j| res[j].abs()).fold(0.0, f64::max);
    let curve = normal_graph(energy.base(), v)?;
    let profile_residual = residual_norm(&curve);
    let lambda1 = eigensolve(&assemble_stability(&curve)?, 1)?.lambdas[0];
    let grid = ShootingGrid { spacing: base.curve.spacing, ..ShootingGrid::default() };
    let (parameter, polished) = match base.topology {
        Topology::Neck => {
            let r = curve.q.iter().copied().fold(f64::INFINITY, f64::min);
            (r, match_neck(&base.cone, &grid, (0.97 * r, 1.03 * r)))
        }
        Topology::Sheet => {
            let h = curve.p[0];
            (h, match_sheet(&base.cone, &grid, (0.97 * h, 1.03 * h)))
        }
    };
    let (pp, pr, pl) = match polished {
        Ok(ex) => {
            let l = eigensolve(&assemble_stability(&ex.curve)?, 1)?.lambdas[0];
            (Some(ex.parameter), Some(ex.residual_norm), Some(l))
        }
        Err(_) => (None, None, None),
    };
    Ok(MorseLimit {
        s,
        graph_residual,
        profile_residual,
        lambda1,
        parameter,
        polished_parameter: pp,
        polished_residual: pr,
        polished_lambda1: pl,
    })
}

/// One-sided ancient flow out of an unstable expander, continued forward
/// until it stalls, loses its sign or hits the singularity proxy.
pub fn morse_flow_line(
    base: &crate::expander::ExpanderProfile,
    energy: &GraphEnergy,
    spec: &SpectralData,
    cfg: &MorseConfig,
) -> Result<MorseRun> {
    use crate::ancient::{construct_ancient, AncientParams};
    if spec.index == 0 {
        return Err(LabError::StableBase);
    }
    if cfg.sign.abs() != 1.0 || !(cfg.amplitude > 0.0) {
        return Err(LabError::InvalidInput("sign must be ±1 and amplitude positive".into()));
    }
    let mut a = vec![0.0; spec.index];
    a[0] = cfg.sign * cfg.amplitude;
    let mut params = AncientParams::new(spec, a)?;
    params.ds = cfg.ancient_ds;
    let ancient = construct_ancient(energy, spec, &params)?.trajectory;
    let act = energy.active();
    let mut one_sided = ancient.frames.iter().all(|f| sign_violation(f, cfg.sign, act.clone()).is_none());

    let flow = Flow::new(energy, cfg.flow.clone())?;
    let v0 = ancient.frames.last().cloned().unwrap_or_else(|| vec![0.0; energy.len()]);
    let mut st = flow.initial_state(v0, 0.0)?;
    let limit = flow.curvature_limit();
    let basis = ModeBasis::new(spec);
    let mut times = vec![0.0];
    let mut frames = vec![st.v.clone()];
    let mut k = 1usize;
    let outcome = loop {
        let target = k as f64 * cfg.record_every;
        let mut stop = None;
        while st.s < target - 1e-12 {
            match flow.step_capped(&st, target - st.s) {
                Ok(next) => st = next,
                Err(LabError::StepUnderflow { at, detail }) => {
                    stop = Some(MorseOutcome::StepUnderflow { s: at, detail });
                    break;
                }
                Err(LabError::Singularity { at, curvature, limit }) => {
                    stop = Some(MorseOutcome::Singularity { s: at, curvature, limit });
                    break;
                }
                Err(e) => return Err(e),
            }
            let c = flow.curvature_proxy(&st.v)?;
            if c > limit {
                stop = Some(MorseOutcome::Singularity { s: st.s, curvature: c, limit });
                break;
            }
        }
        if let Some(o) = stop {
            break o;
        }
        times.push(st.s);
        frames.push(st.v.clone());
        if let Some(node) = sign_violation(&st.v, cfg.sign, act.clone()) {
            one_sided = false;
            break MorseOutcome::SignLost { s: st.s, node };
        }
        let vel = energy.velocity(&st.v)?;
        let speed = vel.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if speed < cfg.stall_tol {
            break MorseOutcome::Converged(limit_report(base, energy, &st.v, st.s)?);
        }
        if st.s >= cfg.s_max {
            break MorseOutcome::NotConverged { s: st.s, velocity: speed };
        }
        k += 1;
    };
    let coeffs = frames.iter().map(|f| basis.coefficients(f)).collect::<Result<_>>()?;
    Ok(MorseRun {
        ancient,
        forward: Trajectory { times, frames, coeffs, provenance: Provenance::Flow },
        outcome,
        one_sided,
    })
}

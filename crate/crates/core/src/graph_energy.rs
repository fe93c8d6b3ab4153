//! Discrete weighted area of normal graphs over a profile.
//!
//! The graph of v over Σ has nodes y_j = x_j + v_j N_j. Each segment between
//! consecutive nodes carries the weighted area
//! |S^{n−1}| ρ^{n−1} e^{|y_m|²/4} |y_{j+1} − y_j| evaluated at its midpoint y_m,
//! and the energy is the sum over segments, normalised by the base area and
//! corrected by its linear part so that v = 0 is an exact critical point.
//! Everything downstream (entropy, gradient, stability operator, flow
//! velocity) is derived from this one functional, which keeps the discrete
//! identities between them exact.

use std::ops::Range;

use crate::dual::D2;
use crate::error::{LabError, Result};
use crate::geometry::{EndKind, ProfileCurve};
use crate::numeric::{compensated_sum, log_add_exp, sphere_area, weighted_inner, CompensatedSum};

#[derive(Debug, Clone)]
struct Segment {
    log_area: f64,
    q: [f64; 2],
    p: [f64; 2],
    nq: [f64; 2],
    np: [f64; 2],
    rho0: f64,
    mid: [f64; 2],
    chord: [f64; 2],
    chord_sq: f64,
    grad0: [f64; 2],
    hess0: [[f64; 2]; 2],
}

#[derive(Debug, Clone)]
pub struct GraphEnergy {
    base: ProfileCurve,
    segs: Vec<Segment>,
    log_mass: Vec<f64>,
    active: Range<usize>,
}

const SMALL_OFFSET: f64 = 1e-5;
const GL3: [(f64, f64); 3] =
    [(0.112_701_665_379_258_31, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.887_298_334_620_741_7, 5.0 / 18.0)];

impl GraphEnergy {
    pub fn new(base: &ProfileCurve) -> Result<Self> {
        let len = base.len();
        let nm1 = (base.n - 1) as f64;
        let log_sphere = sphere_area(base.n).ln();
        let mut segs = Vec::with_capacity(len - 1);
        for j in 0..len - 1 {
            let k = j + 1;
            let nj = base.normal(j);
            let nk = base.normal(k);
            let mid = [0.5 * (base.q[j] + base.q[k]), 0.5 * (base.p[j] + base.p[k])];
            let chord = [base.q[k] - base.q[j], base.p[k] - base.p[j]];
            let chord_sq = chord[0] * chord[0] + chord[1] * chord[1];
            if !(mid[0] > 0.0) || !(chord_sq > 0.0) {
                return Err(LabError::Degenerate(format!("segment {j} has no area")));
            }
            let log_area =
                log_sphere + nm1 * mid[0].ln() + 0.25 * (mid[0] * mid[0] + mid[1] * mid[1]) + 0.5 * chord_sq.ln();
            let mut seg = Segment {
                log_area,
                q: [base.q[j], base.q[k]],
                p: [base.p[j], base.p[k]],
                nq: [nj[0], nk[0]],
                np: [nj[1], nk[1]],
                rho0: mid[0],
                mid,
                chord,
                chord_sq,
                grad0: [0.0; 2],
                hess0: [[0.0; 2]; 2],
            };
            let g = seg_dual(&seg, nm1, 0.0, 0.0);
            seg.grad0 = g.g;
            seg.hess0 = g.h;
            segs.push(seg);
        }
        let mut log_mass = vec![0.0; len];
        for (j, lm) in log_mass.iter_mut().enumerate() {
            let left = if j > 0 { segs[j - 1].log_area } else { f64::NEG_INFINITY };
            let right = if j + 1 < len { segs[j].log_area } else { f64::NEG_INFINITY };
            *lm = 0.5f64.ln() + log_add_exp(left, right);
        }
        Ok(GraphEnergy { base: base.clone(), segs, log_mass, active: base.active_range() })
    }

    pub fn base(&self) -> &ProfileCurve {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Nodes carrying unknowns; truncated endpoints are pinned to zero.
    pub fn active(&self) -> Range<usize> {
        self.active.clone()
    }

    /// Logarithm of the lumped W-mass of each node.
    pub fn log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(LabError::GridMismatch { expected: self.len(), got: v.len() });
        }
        Ok(())
    }

    /// W inner product with lumped masses.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(&self.log_mass, u, v)
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Returns `v` with pinned nodes zeroed.
    pub fn pin(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for j in self.active() {
            out[j] = v[j];
        }
        out
    }

    /// Checks that the graph of v is embedded near every node.
    pub fn admissible(&self, v: &[f64]) -> Result<()> {
        self.check_len(v)?;
        for (j, vj) in v.iter().enumerate() {
            if !vj.is_finite() {
                return Err(LabError::Inadmissible { node: j, reason: "non-finite value".into() });
            }
            if 1.0 - vj * self.base.curvature[j] <= 0.0 {
                return Err(LabError::Inadmissible {
                    node: j,
                    reason: format!("curvature × v = {} exceeds 1", vj * self.base.curvature[j]),
                });
            }
        }
        Ok(())
    }

    fn log_ratio(&self, s: usize, a: f64, b: f64) -> Result<f64> {
        let seg = &self.segs[s];
        let nm1 = (self.base.n - 1) as f64;
        let dq = 0.5 * (a * seg.nq[0] + b * seg.nq[1]);
        let dp = 0.5 * (a * seg.np[0] + b * seg.np[1]);
        let rel_rho = dq / seg.rho0;
        let eq = b * seg.nq[1] - a * seg.nq[0];
        let ep = b * seg.np[1] - a * seg.np[0];
        let rel_len = (2.0 * (seg.chord[0] * eq + seg.chord[1] * ep) + eq * eq + ep * ep) / seg.chord_sq;
        if rel_rho <= -1.0 || rel_len <= -1.0 {
            return Err(LabError::Inadmissible { node: s, reason: "segment collapses".into() });
        }
        let t1 = nm1 * rel_rho.ln_1p();
        let t2 = 0.25 * (2.0 * (seg.mid[0] * dq + seg.mid[1] * dp) + dq * dq + dp * dp);
        let t3 = 0.5 * rel_len.ln_1p();
        Ok(t1 + t2 + t3)
    }

    /// Relative energy E*(v): weighted area of the graph minus that of the
    /// base, with the base's linear term removed.
    pub fn energy(&self, v: &[f64]) -> Result<f64> {
        self.admissible(v)?;
        let mut acc = CompensatedSum::new();
        for (s, seg) in self.segs.iter().enumerate() {
            let (a, b) = (v[s], v[s + 1]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let d = self.log_ratio(s, a, b)?;
            let bracket = if a.abs().max(b.abs()) < SMALL_OFFSET {
                // Taylor remainder ∫₀¹ (1−t) vᵀH(tv)v dt keeps relative precision
                // where e^Δ − 1 − linear would cancel
                let nm1 = (self.base.n - 1) as f64;
                GL3.iter()
                    .map(|(t, w)| {
                        let h = seg_dual(seg, nm1, t * a, t * b).h;
                        w * (1.0 - t) * (h[0][0] * a * a + 2.0 * h[0][1] * a * b + h[1][1] * b * b)
                    })
                    .sum()
            } else {
                d.exp_m1() - (seg.grad0[0] * a + seg.grad0[1] * b)
            };
            if bracket == 0.0 {
                continue;
            }
            acc.add(bracket.signum() * (seg.log_area + bracket.abs().ln()).exp());
        }
        Ok(acc.value())
    }

    fn grad_increment(&self, s: usize, a: f64, b: f64) -> [f64; 2] {
        let seg = &self.segs[s];
        let nm1 = (self.base.n - 1) as f64;
        if a.abs().max(b.abs()) < SMALL_OFFSET {
            let mut out = [0.0; 2];
            for (t, w) in GL3 {
                let h = seg_dual(seg, nm1, t * a, t * b).h;
                out[0] += w * (h[0][0] * a + h[0][1] * b);
                out[1] += w * (h[1][0] * a + h[1][1] * b);
            }
            out
        } else {
            let g = seg_dual(seg, nm1, a, b).g;
            [g[0] - seg.grad0[0], g[1] - seg.grad0[1]]
        }
    }

    /// W-gradient of E* at v (zero at pinned nodes).
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.admissible(v)?;
        for s in 0..self.segs.len() {
            self.log_ratio(s, v[s], v[s + 1])?;
        }
        let mut out = vec![0.0; self.len()];
        for (s, seg) in self.segs.iter().enumerate() {
            let (a, b) = (v[s], v[s + 1]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let d = self.grad_increment(s, a, b);
            out[s] += d[0] * (seg.log_area - self.log_mass[s]).exp();
            out[s + 1] += d[1] * (seg.log_area - self.log_mass[s + 1]).exp();
        }
        Ok(self.pin(&out))
    }

    /// Metric factor m(v) = (N·N_v)² M(v)/M(0) relating the W-gradient to the
    /// normal velocity of the graph.
    pub fn metric(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.admissible(v)?;
        let len = self.len();
        let mut out = vec![1.0; len];
        let y = |j: usize| -> [f64; 2] {
            let nrm = self.base.normal(j);
            [self.base.q[j] + v[j] * nrm[0], self.base.p[j] + v[j] * nrm[1]]
        };
        for j in self.active() {
            let cos = if j == 0 && self.base.start == EndKind::Axis {
                1.0
            } else {
                let (lo, hi) = (j.saturating_sub(1), (j + 1).min(len - 1));
                let (a, b) = (y(lo), y(hi));
                let t = [b[0] - a[0], b[1] - a[1]];
                let nrm = self.base.normal(j);
                (nrm[1] * t[0] - nrm[0] * t[1]) / t[0].hypot(t[1])
            };
            if !(cos > 0.0) {
                return Err(LabError::Inadmissible { node: j, reason: "graph normal turns over".into() });
            }
            let mut ratio = 0.0;
            if j > 0 {
                let g = self.log_ratio(j - 1, v[j - 1], v[j])?;
                ratio += (self.segs[j - 1].log_area - self.log_mass[j] - 2f64.ln() + g).exp();
            }
            if j + 1 < len {
                let g = self.log_ratio(j, v[j], v[j + 1])?;
                ratio += (self.segs[j].log_area - self.log_mass[j] - 2f64.ln() + g).exp();
            }
            out[j] = cos * cos * ratio;
        }
        Ok(out)
    }

    /// Normal velocity ∂_s v of the rescaled flow of graphs: −N(v)/m(v).
    pub fn velocity(&self, v: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient(v)?;
        let m = self.metric(v)?;
        Ok(g.iter().zip(&m).map(|(a, b)| -a / b).collect())
    }

    /// Expander residual of the graph pulled back to the base nodes.
    pub fn graph_residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient(v)?;
        let m = self.metric(v)?;
        let len = self.len();
        let mut out = vec![0.0; len];
        for j in self.active() {
            // m = cos² · ratio, and the residual carries one power of cos
            let cos_ratio = m[j].sqrt() * self.mass_ratio(v, j)?.sqrt();
            out[j] = -g[j] / cos_ratio;
        }
        Ok(out)
    }

    fn mass_ratio(&self, v: &[f64], j: usize) -> Result<f64> {
        let len = self.len();
        let mut ratio = 0.0;
        if j > 0 {
            let g = self.log_ratio(j - 1, v[j - 1], v[j])?;
            ratio += (self.segs[j - 1].log_area - self.log_mass[j] - 2f64.ln() + g).exp();
        }
        if j + 1 < len {
            let g = self.log_ratio(j, v[j], v[j + 1])?;
            ratio += (self.segs[j].log_area - self.log_mass[j] - 2f64.ln() + g).exp();
        }
        Ok(ratio)
    }

    /// Dissipation ⟨N, N/m⟩_W: the weighted L² norm of the graph's expander
    /// residual over the graph, and minus the rate of E* along the flow.
    pub fn dissipation(&self, v: &[f64]) -> Result<f64> {
        let g = self.gradient(v)?;
        let m = self.metric(v)?;
        let w: Vec<f64> = g.iter().zip(&m).map(|(a, b)| a / b).collect();
        Ok(self.inner(&g, &w))
    }

    /// ∫|∇v|² w over the base (segment differences).
    pub fn dirichlet_form(&self, v: &[f64]) -> f64 {
        compensated_sum(self.segs.iter().enumerate().map(|(s, seg)| {
            let d = (v[s + 1] - v[s]).powi(2) / seg.chord_sq;
            if d == 0.0 {
                0.0
            } else {
                (seg.log_area + d.ln()).exp()
            }
        }))
    }

    /// Difference of weighted areas of graph and base inside the ball of
    /// radius `r`, segments counted by their midpoints, with the same linear
    /// correction as E* applied to segments whose base midpoint is inside.
    pub fn ball_difference(&self, v: &[f64], r: f64) -> Result<f64> {
        self.admissible(v)?;
        let mut acc = CompensatedSum::new();
        for (s, seg) in self.segs.iter().enumerate() {
            let (a, b) = (v[s], v[s + 1]);
            let dq = 0.5 * (a * seg.nq[0] + b * seg.nq[1]);
            let dp = 0.5 * (a * seg.np[0] + b * seg.np[1]);
            let in_graph = (seg.mid[0] + dq).hypot(seg.mid[1] + dp) < r;
            let in_base = seg.mid[0].hypot(seg.mid[1]) < r;
            let lin = seg.grad0[0] * a + seg.grad0[1] * b;
            let d = self.log_ratio(s, a, b)?;
            let bracket = match (in_graph, in_base) {
                (true, true) => d.exp_m1() - lin,
                (true, false) => d.exp(),
                (false, true) => -1.0 - lin,
                (false, false) => 0.0,
            };
            if bracket != 0.0 {
                acc.add(bracket.signum() * (seg.log_area + bracket.abs().ln()).exp());
            }
        }
        Ok(acc.value())
    }

    /// Stability operator L = −M⁻¹ Hess E*(0) applied to v.
    pub fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (s, seg) in self.segs.iter().enumerate() {
            let (a, b) = (v[s], v[s + 1]);
            let h = seg.hess0;
            out[s] -= (h[0][0] * a + h[0][1] * b) * (seg.log_area - self.log_mass[s]).exp();
            out[s + 1] -= (h[1][0] * a + h[1][1] * b) * (seg.log_area - self.log_mass[s + 1]).exp();
        }
        self.pin(&out)
    }

    /// Rows of −L restricted to the active nodes as (sub, diag, sup).
    pub fn operator_rows(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let r = self.active();
        let m = r.len();
        let mut sub = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m];
        for (i, j) in r.clone().enumerate() {
            if j > 0 {
                let seg = &self.segs[j - 1];
                let w = (seg.log_area - self.log_mass[j]).exp();
                diag[i] += seg.hess0[1][1] * w;
                sub[i] = seg.hess0[1][0] * w;
            }
            if j + 1 < self.len() {
                let seg = &self.segs[j];
                let w = (seg.log_area - self.log_mass[j]).exp();
                diag[i] += seg.hess0[0][0] * w;
                sup[i] = seg.hess0[0][1] * w;
            }
        }
        if m > 0 {
            sub[0] = 0.0;
            sup[m - 1] = 0.0;
        }
        (sub, diag, sup)
    }

    /// Symmetric tridiagonal form M^{−1/2} Hess M^{−1/2} of −L on the active
    /// nodes (Liouville transform), as (diagonal, off-diagonal).
    pub fn liouville(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.active();
        let mut diag = Vec::with_capacity(r.len());
        let mut off = Vec::with_capacity(r.len().saturating_sub(1));
        for j in r.clone() {
            let mut d = 0.0;
            if j > 0 {
                let seg = &self.segs[j - 1];
                d += seg.hess0[1][1] * (seg.log_area - self.log_mass[j]).exp();
            }
            if j + 1 < self.len() {
                let seg = &self.segs[j];
                d += seg.hess0[0][0] * (seg.log_area - self.log_mass[j]).exp();
                if j + 1 < r.end {
                    let w = (seg.log_area - 0.5 * (self.log_mass[j] + self.log_mass[j + 1])).exp();
                    off.push(seg.hess0[0][1] * w);
                }
            }
            diag.push(d);
        }
        (diag, off)
    }

    /// Quadratic form vᵀ Hess E*(0) v = −⟨v, Lv⟩_W.
    pub fn hessian_form(&self, v: &[f64]) -> f64 {
        compensated_sum(self.segs.iter().enumerate().map(|(s, seg)| {
            let (a, b) = (v[s], v[s + 1]);
            let h = seg.hess0;
            let qf = h[0][0] * a * a + 2.0 * h[0][1] * a * b + h[1][1] * b * b;
            if qf == 0.0 {
                0.0
            } else {
                qf.signum() * (seg.log_area + qf.abs().ln()).exp()
            }
        }))
    }

    /// The same quadratic form split by summation by parts into a
    /// gradient part Σ k_s (Δv)² and a potential part Σ P_j v_j².
    pub fn hessian_form_split(&self, v: &[f64]) -> (f64, f64) {
        let mut grad = CompensatedSum::new();
        let mut pot = CompensatedSum::new();
        let signed = |x: f64, la: f64| if x == 0.0 { 0.0 } else { x.signum() * (la + x.abs().ln()).exp() };
        for (s, seg) in self.segs.iter().enumerate() {
            let (a, b) = (v[s], v[s + 1]);
            let h = seg.hess0;
            grad.add(signed(-h[0][1] * (b - a) * (b - a), seg.log_area));
            pot.add(signed((h[0][0] + h[0][1]) * a * a + (h[1][1] + h[0][1]) * b * b, seg.log_area));
        }
        (grad.value(), pot.value())
    }
}

fn seg_dual(seg: &Segment, nm1: f64, a: f64, b: f64) -> D2 {
    let a = D2::variable(a, 0);
    let b = D2::variable(b, 1);
    let yq0 = a * seg.nq[0] + seg.q[0];
    let yp0 = a * seg.np[0] + seg.p[0];
    let yq1 = b * seg.nq[1] + seg.q[1];
    let yp1 = b * seg.np[1] + seg.p[1];
    let rho = (yq0 + yq1) * 0.5;
    let mp = (yp0 + yp1) * 0.5;
    let eq = yq1 - yq0;
    let ep = yp1 - yp0;
    let mid_sq = seg.mid[0] * seg.mid[0] + seg.mid[1] * seg.mid[1];
    let log_g = (rho * (1.0 / seg.rho0)).ln() * nm1
        + (rho.sqr() + mp.sqr() + (-mid_sq)) * 0.25
        + ((eq.sqr() + ep.sqr()) * (1.0 / seg.chord_sq)).ln() * 0.5;
    log_g.exp()
}

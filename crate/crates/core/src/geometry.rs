//! Rotationally symmetric hypersurfaces in R^{n+1} as profile curves.
//!
//! A profile is a curve in the (q, p) half plane, q the distance to the
//! rotation axis and p the axial coordinate. The tangent is
//! T = (cos θ, sin θ) and the unit normal N = (−sin θ, cos θ). The scalar
//! mean curvature is H = θ' + (n−1) sin θ / q, so a sphere of radius ρ with
//! outward normal has H = −n/ρ and x·N = ρ.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{cumulative_integral, least_squares, linear_fit, sphere_area, uniform_derivative, Parity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nappe {
    Upper,
    Lower,
    Both,
}

/// Double cone {x_{n+1} = ± slope·|y|}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub n: usize,
    pub slope: f64,
    pub nappe: Nappe,
}

impl ConeSpec {
    /// Slope 0 is accepted as the degenerate cone (a hyperplane).
    pub fn new(n: usize, slope: f64) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidInput(format!("dimension n = {n} must be at least 2")));
        }
        if !slope.is_finite() || slope < 0.0 {
            return Err(LabError::InvalidInput(format!("cone slope {slope} must be finite and non-negative")));
        }
        Ok(ConeSpec { n, slope, nappe: Nappe::Both })
    }

    pub fn with_nappe(mut self, nappe: Nappe) -> Self {
        self.nappe = nappe;
        self
    }

    pub fn is_degenerate(&self) -> bool {
        self.slope == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKind {
    Axis,
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub n: usize,
    /// Spacing of the node parameter; equals the arc-length step for
    /// curves produced by shooting or resampling.
    pub spacing: f64,
    pub sigma: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    /// |dx/du| for the node parameter u; 1 for arc-length curves.
    pub speed: Vec<f64>,
    /// dθ/dσ.
    pub curvature: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    pub x_dot_n: Vec<f64>,
    pub a2: Vec<f64>,
    /// log of q^{n−1}·|S^{n−1}| (−∞ on the axis).
    pub log_area: Vec<f64>,
    /// |x|²/4.
    pub log_weight: Vec<f64>,
    pub start: EndKind,
    pub end: EndKind,
}

impl ProfileCurve {
    /// Builds a curve from arc-length samples on a uniform grid.
    pub fn from_arclength(
        n: usize,
        spacing: f64,
        q: Vec<f64>,
        p: Vec<f64>,
        theta: Vec<f64>,
        start: EndKind,
        end: EndKind,
    ) -> Result<Self> {
        let len = q.len();
        Self::from_parametrized(n, spacing, q, p, theta, vec![1.0; len], start, end)
    }

    /// Builds a curve whose nodes sit at uniform steps of a parameter u,
    /// with tangent angles and speeds |dx/du| supplied.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parametrized(
        n: usize,
        spacing: f64,
        q: Vec<f64>,
        p: Vec<f64>,
        theta: Vec<f64>,
        speed: Vec<f64>,
        start: EndKind,
        end: EndKind,
    ) -> Result<Self> {
        let len = q.len();
        if n < 2 {
            return Err(LabError::InvalidInput("n must be at least 2".into()));
        }
        if len < 8 || p.len() != len || theta.len() != len || speed.len() != len {
            return Err(LabError::Degenerate(format!("profile needs at least 8 consistent nodes, got {len}")));
        }
        if !(spacing > 0.0) {
            return Err(LabError::Degenerate("non-positive node spacing".into()));
        }
        if end == EndKind::Axis {
            return Err(LabError::InvalidInput("axis endpoints are only supported at the start".into()));
        }
        if speed.iter().any(|s| !(*s > 0.0)) {
            return Err(LabError::Degenerate("non-monotone parametrization (zero speed)".into()));
        }
        let parity = match start {
            EndKind::Axis => Some(Parity::Odd),
            EndKind::Truncated => None,
        };
        let dtheta = uniform_derivative(&theta, spacing, 1, parity);
        let curvature: Vec<f64> = dtheta.iter().zip(&speed).map(|(d, s)| d / s).collect();
        let sigma = cumulative_integral(&speed, spacing);
        let area_const = sphere_area(n).ln();
        let nm1 = (n - 1) as f64;
        let mut mean_curvature = vec![0.0; len];
        let mut x_dot_n = vec![0.0; len];
        let mut a2 = vec![0.0; len];
        let mut log_area = vec![0.0; len];
        let mut log_weight = vec![0.0; len];
        for j in 0..len {
            let (s, c) = theta[j].sin_cos();
            let k = curvature[j];
            if j == 0 && start == EndKind::Axis {
                mean_curvature[j] = n as f64 * k;
                a2[j] = n as f64 * k * k;
                log_area[j] = f64::NEG_INFINITY;
            } else {
                if !(q[j] > 0.0) {
                    return Err(LabError::Degenerate(format!("q = {} at interior node {j}", q[j])));
                }
                let r = s / q[j];
                mean_curvature[j] = k + nm1 * r;
                a2[j] = k * k + nm1 * r * r;
                log_area[j] = area_const + nm1 * q[j].ln();
            }
            x_dot_n[j] = p[j] * c - q[j] * s;
            log_weight[j] = 0.25 * (q[j] * q[j] + p[j] * p[j]);
        }
        Ok(ProfileCurve {
            n,
            spacing,
            sigma,
            q,
            p,
            theta,
            speed,
            curvature,
            mean_curvature,
            x_dot_n,
            a2,
            log_area,
            log_weight,
            start,
            end,
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn normal(&self, j: usize) -> [f64; 2] {
        let (s, c) = self.theta[j].sin_cos();
        [-s, c]
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.q[j].hypot(self.p[j])
    }

    pub fn max_radius(&self) -> f64 {
        (0..self.len()).map(|j| self.radius(j)).fold(0.0, f64::max)
    }

    /// Arc length of the whole profile.
    pub fn total_length(&self) -> f64 {
        *self.sigma.last().unwrap_or(&0.0)
    }

    /// Nodes that carry unknowns: truncated endpoints are pinned.
    pub fn active_range(&self) -> std::ops::Range<usize> {
        let a = match self.start {
            EndKind::Axis => 0,
            EndKind::Truncated => 1,
        };
        a..self.len() - 1
    }

    /// Largest offset for which normal graphs are guaranteed embedded.
    pub fn tubular_radius(&self) -> f64 {
        let kmax = self.curvature.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if kmax == 0.0 {
            f64::INFINITY
        } else {
            1.0 / kmax
        }
    }

    /// Same node positions rescaled by `factor` (for unrescaling flows).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let q = self.q.iter().map(|v| v * factor).collect();
        let p = self.p.iter().map(|v| v * factor).collect();
        let speed = self.speed.iter().map(|v| v * factor).collect();
        Self::from_parametrized(self.n, self.spacing, q, p, self.theta.clone(), speed, self.start, self.end)
    }

    /// Checks that both the arc-length parametrization and axis conditions hold.
    pub fn validate(&self) -> Result<()> {
        for w in self.sigma.windows(2) {
            if !(w[1] > w[0]) {
                return Err(LabError::Degenerate("arc length is not strictly increasing".into()));
            }
        }
        if self.start == EndKind::Axis && (self.q[0].abs() > 1e-12 || self.theta[0].sin().abs() > 1e-9) {
            return Err(LabError::Degenerate("axis endpoint is not perpendicular to the axis".into()));
        }
        Ok(())
    }
}

/// Pointwise expander residual H − ½ x·N.
pub fn expander_residual(curve: &ProfileCurve) -> Vec<f64> {
    curve.mean_curvature.iter().zip(&curve.x_dot_n).map(|(h, xn)| h - 0.5 * xn).collect()
}

/// Sup of the expander residual over interior nodes.
pub fn residual_norm(curve: &ProfileCurve) -> f64 {
    let r = expander_residual(curve);
    let len = r.len();
    r[1..len - 1].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Profile of the normal graph x + vN over `base`; node j of the result is
/// the image of node j of the base.
pub fn normal_graph(base: &ProfileCurve, v: &[f64]) -> Result<ProfileCurve> {
    let len = base.len();
    if v.len() != len {
        return Err(LabError::GridMismatch { expected: len, got: v.len() });
    }
    if v.iter().all(|x| *x == 0.0) {
        return Ok(base.clone());
    }
    let parity = match base.start {
        EndKind::Axis => Some(Parity::Even),
        EndKind::Truncated => None,
    };
    let dv = uniform_derivative(v, base.spacing, 1, parity);
    let mut q = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut theta = vec![0.0; len];
    let mut speed = vec![0.0; len];
    for j in 0..len {
        let stretch = 1.0 - v[j] * base.curvature[j];
        if stretch <= 0.0 {
            return Err(LabError::Inadmissible {
                node: j,
                reason: format!("curvature × v = {} exceeds 1", v[j] * base.curvature[j]),
            });
        }
        let [nq, np] = base.normal(j);
        q[j] = base.q[j] + v[j] * nq;
        p[j] = base.p[j] + v[j] * np;
        if !(j == 0 && base.start == EndKind::Axis) && q[j] <= 0.0 {
            return Err(LabError::Inadmissible { node: j, reason: "offset crosses the rotation axis".into() });
        }
        let tangential = base.speed[j] * stretch;
        theta[j] = base.theta[j] + dv[j].atan2(tangential);
        speed[j] = tangential.hypot(dv[j]);
    }
    if base.start == EndKind::Axis {
        q[0] = 0.0;
    }
    ProfileCurve::from_parametrized(base.n, base.spacing, q, p, theta, speed, base.start, base.end)
}

/// Arc-length profile of the rotation hypersurface of the graph p = w(q),
/// from samples of w on [0, (len−1)·dr], resampled with node spacing `spacing`.
pub fn radial_graph(w: &[f64], dr: f64, n: usize, spacing: f64) -> Result<ProfileCurve> {
    let m = w.len();
    if m < 8 || !(dr > 0.0) || w.iter().any(|x| !x.is_finite()) {
        return Err(LabError::Degenerate("radial samples must be finite, dense and at least 8 long".into()));
    }
    let raw_slope = uniform_derivative(w, dr, 1, None)[0];
    let wmax = w.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    if raw_slope.abs() > 1e-6 * wmax {
        return Err(LabError::InvalidInput(format!("w'(0) = {raw_slope:e} is not zero (axis smoothness)")));
    }
    let d1 = uniform_derivative(w, dr, 1, Some(Parity::Even));
    let d2 = uniform_derivative(w, dr, 2, Some(Parity::Even));
    let panels: Vec<[f64; 6]> = (0..m - 1)
        .map(|i| {
            let (f0, f1) = (w[i], w[i + 1]);
            let (a0, a1) = (dr * d1[i], dr * d1[i + 1]);
            let (s0, s1) = (dr * dr * d2[i], dr * dr * d2[i + 1]);
            [
                f0,
                a0,
                0.5 * s0,
                -10.0 * f0 - 6.0 * a0 - 1.5 * s0 + 10.0 * f1 - 4.0 * a1 + 0.5 * s1,
                15.0 * f0 + 8.0 * a0 + 1.5 * s0 - 15.0 * f1 + 7.0 * a1 - s1,
                -6.0 * f0 - 3.0 * a0 - 0.5 * s0 + 6.0 * f1 - 3.0 * a1 + 0.5 * s1,
            ]
        })
        .collect();
    let eval = |c: &[f64; 6], t: f64| -> (f64, f64) {
        let v = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let d = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        (v, d / dr)
    };
    let panel_length = |c: &[f64; 6], t_end: f64| -> f64 {
        let mut acc = 0.0;
        for (x, wt) in GAUSS8 {
            let t = 0.5 * t_end * (x + 1.0);
            let (_, d) = eval(c, t);
            acc += wt * (1.0 + d * d).sqrt();
        }
        0.5 * t_end * dr * acc
    };
    let mut cum = vec![0.0; m];
    for i in 0..m - 1 {
        let l = panel_length(&panels[i], 1.0);
        if !(l > 0.0) {
            return Err(LabError::Degenerate("non-monotone arc-length reparametrization".into()));
        }
        cum[i + 1] = cum[i] + l;
    }
    let total = cum[m - 1];
    let count = (total / spacing + 1e-9).floor() as usize + 1;
    let mut q = Vec::with_capacity(count);
    let mut p = Vec::with_capacity(count);
    let mut theta = Vec::with_capacity(count);
    let mut panel = 0usize;
    for k in 0..count {
        let target = (k as f64 * spacing).min(total);
        while panel + 1 < m - 1 && cum[panel + 1] < target {
            panel += 1;
        }
        let c = &panels[panel];
        let want = target - cum[panel];
        let mut t = (want / (cum[panel + 1] - cum[panel])).clamp(0.0, 1.0);
        for _ in 0..50 {
            let f = panel_length(c, t) - want;
            let (_, d) = eval(c, t);
            let step = f / ((1.0 + d * d).sqrt() * dr);
            t = (t - step).clamp(0.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (val, d) = eval(c, t);
        let r = (panel as f64 + t) * dr;
        q.push(if k == 0 { 0.0 } else { r });
        p.push(val);
        theta.push(if k == 0 { 0.0 } else { d.atan() });
    }
    ProfileCurve::from_arclength(n, spacing, q, p, theta, EndKind::Axis, EndKind::Truncated)
}

/// Exact cone profile p = slope·q on [r_min, r_max] (truncated at both ends).
pub fn cone_profile(cone: &ConeSpec, r_min: f64, r_max: f64, spacing: f64) -> Result<ProfileCurve> {
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(LabError::InvalidInput("cone profile needs 0 < r_min < r_max".into()));
    }
    let angle = cone.slope.atan();
    let c = angle.cos();
    let length = (r_max - r_min) / c;
    let count = (length / spacing + 1e-9).floor() as usize + 1;
    let q = (0..count).map(|k| r_min + k as f64 * spacing * c).collect();
    let p = (0..count).map(|k| (r_min + k as f64 * spacing * c) * cone.slope).collect();
    ProfileCurve::from_arclength(cone.n, spacing, q, p, vec![angle; count], EndKind::Truncated, EndKind::Truncated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeFit {
    /// Signed slope of the fitted ray p = slope·q.
    pub slope: f64,
    /// Decay exponent of the distance to the ray (∞ for an exact cone).
    pub rate: f64,
    /// Root-mean-square fit residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveEnd {
    First,
    Last,
}

/// Fits one truncated end of a profile to an asymptotic ray.
pub fn fit_cone_end(curve: &ProfileCurve, which: CurveEnd) -> Result<ConeFit> {
    let len = curve.len();
    let (kind, half) = match which {
        CurveEnd::First => (curve.start, if curve.end == EndKind::Truncated { len / 2 } else { len }),
        CurveEnd::Last => (curve.end, if curve.start == EndKind::Truncated { len / 2 } else { len }),
    };
    if kind != EndKind::Truncated {
        return Err(LabError::NotConical("requested end is on the axis".into()));
    }
    let count = ((half as f64) * 0.2).ceil() as usize;
    if count < 6 {
        return Err(LabError::Window(format!("{count} nodes in the cone-fitting window")));
    }
    let idx: Vec<usize> = match which {
        CurveEnd::First => (0..count).collect(),
        CurveEnd::Last => (len - count..len).collect(),
    };
    let outer = match which {
        CurveEnd::First => 0,
        CurveEnd::Last => len - 1,
    };
    let rad = curve.radius(outer);
    if rad <= 0.0 || curve.x_dot_n[outer].abs() / rad > 0.05 {
        return Err(LabError::NotConical(format!(
            "position is far from tangent at the end (|x·N|/|x| = {})",
            curve.x_dot_n[outer].abs() / rad.max(1e-300)
        )));
    }
    let dirs: Vec<f64> = idx.iter().map(|&j| curve.theta[j].sin() / curve.theta[j].cos()).collect();
    let tmin = idx.iter().map(|&j| curve.theta[j].cos().abs()).fold(f64::INFINITY, f64::min);
    if tmin < 1e-6 {
        return Err(LabError::NotConical("end is vertical".into()));
    }
    let dmin = dirs.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = dirs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (dmax - dmin).abs() > 0.05 * (1.0 + dmax.abs()) {
        return Err(LabError::NotConical(format!("tangent slope varies by {} over the window", dmax - dmin)));
    }
    if idx.iter().any(|&j| curve.q[j] <= 0.0) {
        return Err(LabError::NotConical("window touches the axis".into()));
    }
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&j| {
            let x = curve.q[j];
            vec![x, 1.0 / x, x.powi(-3), x.powi(-5)]
        })
        .collect();
    let y: Vec<f64> = idx.iter().map(|&j| curve.p[j]).collect();
    let coef = least_squares(&rows, &y).ok_or_else(|| LabError::NotConical("singular cone fit".into()))?;
    let mut ss = 0.0;
    for (r, yy) in rows.iter().zip(&y) {
        let model: f64 = r.iter().zip(&coef).map(|(a, b)| a * b).sum();
        ss += (model - yy).powi(2);
    }
    let residual = (ss / rows.len() as f64).sqrt();
    if residual > 1e-4 * rad {
        return Err(LabError::NotConical(format!("fit residual {residual:e} too large")));
    }
    let slope = coef[0];
    let norm = (1.0 + slope * slope).sqrt();
    let dist: Vec<f64> = idx.iter().map(|&j| (curve.p[j] - slope * curve.q[j]).abs() / norm).collect();
    let scale = rad.max(1.0);
    let rate = if dist.iter().all(|d| *d < 1e-12 * scale) {
        f64::INFINITY
    } else {
        let (lx, ly): (Vec<f64>, Vec<f64>) = idx
            .iter()
            .zip(&dist)
            .filter(|(_, d)| **d > 1e-14 * scale)
            .map(|(&j, d)| (curve.radius(j).ln(), d.ln()))
            .unzip();
        match linear_fit(&lx, &ly) {
            Some((s, _)) => -s,
            None => f64::NAN,
        }
    };
    Ok(ConeFit { slope, rate, residual })
}

/// Asymptotic cone of the profile's truncated end(s) and the distance decay rate.
pub fn asymptotic_cone(curve: &ProfileCurve) -> Result<(ConeSpec, f64)> {
    match (curve.start, curve.end) {
        (EndKind::Axis, EndKind::Truncated) => {
            let fit = fit_cone_end(curve, CurveEnd::Last)?;
            let nappe = if fit.slope < 0.0 { Nappe::Lower } else { Nappe::Upper };
            Ok((ConeSpec::new(curve.n, fit.slope.abs())?.with_nappe(nappe), fit.rate))
        }
        _ => {
            let first = fit_cone_end(curve, CurveEnd::First)?;
            let last = fit_cone_end(curve, CurveEnd::Last)?;
            let nappe = if first.slope * last.slope < 0.0 {
                Nappe::Both
            } else if first.slope >= 0.0 {
                Nappe::Upper
            } else {
                Nappe::Lower
            };
            let slope = 0.5 * (first.slope.abs() + last.slope.abs());
            Ok((ConeSpec::new(curve.n, slope)?.with_nappe(nappe), first.rate.min(last.rate)))
        }
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(r: f64) -> ProfileCurve {
        let dr = 0.01;
        let w = vec![0.0; (r / dr) as usize + 1];
        radial_graph(&w, dr, 2, 0.02).unwrap()
    }

    fn sphere_cap(spacing: f64) -> ProfileCurve {
        let dr = 1e-3;
        let w: Vec<f64> = (0..=1900).map(|i| (4.0 - (i as f64 * dr).powi(2)).sqrt()).collect();
        radial_graph(&w, dr, 2, spacing).unwrap()
    }

    #[test]
    fn plane_has_zero_curvature() {
        let c = plane(20.0);
        assert!(c.mean_curvature.iter().all(|h| *h == 0.0));
        assert!(c.x_dot_n.iter().all(|v| *v == 0.0));
        assert!(expander_residual(&c).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sphere_cap_sign_convention() {
        let c = sphere_cap(0.02);
        for j in 0..c.len() {
            assert!((c.mean_curvature[j] + 1.0).abs() < 1e-6, "H[{j}] = {}", c.mean_curvature[j]);
            assert!((c.x_dot_n[j] - 2.0).abs() < 1e-9);
        }
        let r = expander_residual(&c);
        assert!(r.iter().all(|v| (v + 2.0).abs() < 1e-6));
        assert!(asymptotic_cone(&c).is_err());
    }

    #[test]
    fn sphere_offset_is_larger_sphere() {
        let c = sphere_cap(0.02);
        let g = normal_graph(&c, &vec![0.5; c.len()]).unwrap();
        for j in 0..g.len() {
            assert!((g.mean_curvature[j] + 0.8).abs() < 1e-6);
            assert!((g.radius(j) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_graph_is_identity() {
        let c = sphere_cap(0.05);
        let g = normal_graph(&c, &vec![0.0; c.len()]).unwrap();
        assert_eq!(expander_residual(&g), expander_residual(&c));
    }

    #[test]
    fn cone_residual_and_decay() {
        let cone = ConeSpec::new(2, 1.0).unwrap();
        let c = cone_profile(&cone, 0.5, 20.0, 0.02).unwrap();
        let r = expander_residual(&c);
        for j in 0..c.len() {
            assert!(c.x_dot_n[j].abs() < 1e-12);
            let expect = 1.0 / (c.q[j] * 2f64.sqrt());
            assert!((r[j] - expect).abs() < 1e-12, "node {j}: {} vs {expect}", r[j]);
        }
        let half = c.len() / 2;
        let (lx, ly): (Vec<f64>, Vec<f64>) = (half..c.len()).map(|j| (c.q[j].ln(), c.a2[j].ln())).unzip();
        let (slope, _) = linear_fit(&lx, &ly).unwrap();
        assert!((slope + 2.0).abs() < 0.05);
    }

    #[test]
    fn exact_cone_fit() {
        let cone = ConeSpec::new(2, 0.7).unwrap();
        let c = cone_profile(&cone, 1.0, 24.0, 0.02).unwrap();
        let (fit, rate) = asymptotic_cone(&c).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-12);
        assert!(rate.is_infinite());
    }

    #[test]
    fn rejects_tilted_axis() {
        let w: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        assert!(radial_graph(&w, 0.01, 2, 0.02).is_err());
    }
}

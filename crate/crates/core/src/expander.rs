//! Self-expander profiles by shooting: sheets from the axis and necks from
//! the symmetry plane, matched to a prescribed cone slope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{fit_cone_end, residual_norm, ConeSpec, CurveEnd, EndKind, Nappe, ProfileCurve};
use crate::ode::{integrate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingGrid {
    /// Arc-length node spacing.
    pub spacing: f64,
    /// Truncation radius |x| ≤ r_max.
    pub r_max: f64,
    /// Integrator tolerance (relative and absolute).
    pub tol: f64,
}

impl Default for ShootingGrid {
    fn default() -> Self {
        ShootingGrid { spacing: 0.02, r_max: 24.0, tol: 1e-12 }
    }
}

impl ShootingGrid {
    pub fn halved(&self) -> Self {
        ShootingGrid { spacing: 0.5 * self.spacing, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Sheet,
    Neck,
}

#[derive(Debug, Clone)]
pub struct ExpanderProfile {
    pub curve: ProfileCurve,
    pub cone: ConeSpec,
    pub topology: Topology,
    /// Axis height for sheets, neck radius for necks.
    pub parameter: f64,
    pub residual_norm: f64,
    /// Sheets stand for the disconnected expander: the sheet plus its mirror image.
    pub reflected: bool,
}

fn profile_rhs(n: usize) -> impl Fn(f64, &[f64; 3]) -> Option<[f64; 3]> {
    let nm1 = (n - 1) as f64;
    move |_s, y| {
        let [q, p, th] = *y;
        if !(q > 0.0) || !q.is_finite() {
            return None;
        }
        let (s, c) = th.sin_cos();
        let xn = p * c - q * s;
        Some([c, s, 0.5 * xn - nm1 * s / q])
    }
}

enum Start {
    Axis,
    Plane,
}

fn march(
    n: usize,
    start: Start,
    node0: [f64; 3],
    s_init: f64,
    y_init: [f64; 3],
    grid: &ShootingGrid,
) -> Result<Vec<[f64; 3]>> {
    let f = profile_rhs(n);
    let tol = Tolerance { rtol: grid.tol, atol: grid.tol };
    let mut nodes = vec![node0];
    let mut s = s_init;
    let mut y = y_init;
    let mut hstep = grid.spacing * 0.25;
    let max_nodes = ((40.0 * grid.r_max) / grid.spacing) as usize;
    for k in 1..max_nodes {
        let target = k as f64 * grid.spacing;
        let res = integrate(&f, s, y, target, hstep, tol);
        let (y_new, h_next) = match res {
            Ok(v) => v,
            Err(_) => {
                return Err(match start {
                    Start::Plane => LabError::Topology { sigma: s, p: y[1] },
                    Start::Axis => LabError::BlowUp { radius: y[0] },
                })
            }
        };
        s = target;
        y = y_new;
        hstep = h_next.min(grid.spacing);
        if y[0].hypot(y[1]) > grid.r_max {
            return Ok(nodes);
        }
        match start {
            Start::Axis => {
                if y[2].cos() <= 0.0 {
                    return Err(LabError::BlowUp { radius: y[0] });
                }
            }
            Start::Plane => {
                if y[0] < 1e-6 {
                    return Err(LabError::Topology { sigma: s, p: y[1] });
                }
            }
        }
        nodes.push(y);
    }
    Err(LabError::BlowUp { radius: y[0] })
}

/// Sheet through (0, h0) meeting the axis perpendicularly.
pub fn shoot_sheet(cone: &ConeSpec, h0: f64, grid: &ShootingGrid) -> Result<ProfileCurve> {
    if !h0.is_finite() {
        return Err(LabError::InvalidInput("initial height must be finite".into()));
    }
    let n = cone.n;
    // Taylor start of w(r) = h0 + a r² + b r⁴ off the regular singular point.
    let a = h0 / (4.0 * n as f64);
    let b = (-0.5 * a + 8.0 * a * a * a) / (4.0 * (n as f64 + 2.0));
    let r0 = 1e-3 * grid.spacing / 0.02;
    let w = h0 + a * r0 * r0 + b * r0.powi(4);
    let dw = 2.0 * a * r0 + 4.0 * b * r0.powi(3);
    let s0 = r0 + (2.0 / 3.0) * a * a * r0.powi(3) + 1.6 * a * b * r0.powi(5);
    let nodes = march(n, Start::Axis, [0.0, h0, 0.0], s0, [r0, w, dw.atan()], grid)?;
    let (q, p, th) = unzip3(&nodes);
    ProfileCurve::from_arclength(n, grid.spacing, q, p, th, EndKind::Axis, EndKind::Truncated)
}

fn unzip3(nodes: &[[f64; 3]]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let q = nodes.iter().map(|v| v[0]).collect();
    let p = nodes.iter().map(|v| v[1]).collect();
    let th = nodes.iter().map(|v| v[2]).collect();
    (q, p, th)
}

/// Full neck profile through (r0, 0), traversed from the upper end through the
/// neck to the lower end; the lower half is the exact mirror of the upper.
pub fn shoot_neck(cone: &ConeSpec, r0: f64, grid: &ShootingGrid) -> Result<ProfileCurve> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(LabError::InvalidInput(format!("neck radius {r0} must be positive")));
    }
    let start = [r0, 0.0, std::f64::consts::FRAC_PI_2];
    let half = march(cone.n, Start::Plane, start, 0.0, start, grid)?;
    let k = half.len();
    let mut q = Vec::with_capacity(2 * k - 1);
    let mut p = Vec::with_capacity(2 * k - 1);
    let mut th = Vec::with_capacity(2 * k - 1);
    for node in half.iter().rev() {
        q.push(node[0]);
        p.push(node[1]);
        th.push(node[2] - std::f64::consts::PI);
    }
    for node in half.iter().skip(1) {
        q.push(node[0]);
        p.push(-node[1]);
        th.push(-node[2]);
    }
    ProfileCurve::from_arclength(cone.n, grid.spacing, q, p, th, EndKind::Truncated, EndKind::Truncated)
}

/// Fitted asymptotic slope (signed) of a sheet.
pub fn sheet_terminal_slope(cone: &ConeSpec, h0: f64, grid: &ShootingGrid) -> Result<f64> {
    let c = shoot_sheet(cone, h0, grid)?;
    Ok(fit_cone_end(&c, CurveEnd::Last)?.slope)
}

/// Fitted asymptotic slope of the upper half of a neck.
pub fn neck_terminal_slope(cone: &ConeSpec, r0: f64, grid: &ShootingGrid) -> Result<f64> {
    let c = shoot_neck(cone, r0, grid)?;
    Ok(fit_cone_end(&c, CurveEnd::First)?.slope)
}

fn bisect_polish<F: Fn(f64) -> Result<f64>>(f: &F, mut lo: f64, mut hi: f64, mut flo: f64) -> Result<f64> {
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x)?;
    let d = 1e-6 * x.abs().max(1e-3);
    if let Ok(fd) = f(x + d) {
        let slope = (fd - fx) / d;
        if slope != 0.0 && slope.is_finite() {
            let xn = x - fx / slope;
            if (xn - x).abs() < 1e-8 * x.abs().max(1.0) {
                if let Ok(fxn) = f(xn) {
                    if fxn.abs() < fx.abs() {
                        return Ok(xn);
                    }
                }
            }
        }
    }
    Ok(x)
}

fn finish(cone: &ConeSpec, curve: ProfileCurve, topology: Topology, parameter: f64) -> Result<ExpanderProfile> {
    let fit = match topology {
        Topology::Sheet => fit_cone_end(&curve, CurveEnd::Last)?,
        Topology::Neck => fit_cone_end(&curve, CurveEnd::First)?,
    };
    let nappe = match topology {
        Topology::Neck => Nappe::Both,
        Topology::Sheet if fit.slope < 0.0 => Nappe::Lower,
        Topology::Sheet => Nappe::Upper,
    };
    let fitted = ConeSpec::new(cone.n, fit.slope.abs())?.with_nappe(nappe);
    let residual_norm = residual_norm(&curve);
    Ok(ExpanderProfile {
        curve,
        cone: fitted,
        topology,
        parameter,
        residual_norm,
        reflected: topology == Topology::Sheet,
    })
}

/// Sheet whose fitted slope equals the cone slope, by bisection in h0.
pub fn match_sheet(cone: &ConeSpec, grid: &ShootingGrid, bracket: (f64, f64)) -> Result<ExpanderProfile> {
    let (lo, hi) = bracket;
    let f = |h0: f64| -> Result<f64> { Ok(sheet_terminal_slope(cone, h0, grid)? - cone.slope) };
    let flo = f(lo)?;
    let fhi = f(hi)?;
    let h0 = if flo == 0.0 {
        lo
    } else if fhi == 0.0 {
        hi
    } else if (flo < 0.0) == (fhi < 0.0) {
        return Err(LabError::NoSignChange {
            lo,
            hi,
            slope_min: (flo.min(fhi)) + cone.slope,
            slope_max: (flo.max(fhi)) + cone.slope,
        });
    } else {
        bisect_polish(&f, lo, hi, flo)?
    };
    let curve = shoot_sheet(cone, h0, grid)?;
    finish(cone, curve, Topology::Sheet, h0)
}

/// Neck whose fitted slope equals the cone slope, by bisection in r0.
pub fn match_neck(cone: &ConeSpec, grid: &ShootingGrid, bracket: (f64, f64)) -> Result<ExpanderProfile> {
    let (lo, hi) = bracket;
    let f = |r0: f64| -> Result<f64> { Ok(neck_terminal_slope(cone, r0, grid)? - cone.slope) };
    let flo = f(lo)?;
    let fhi = f(hi)?;
    if (flo < 0.0) == (fhi < 0.0) && flo != 0.0 && fhi != 0.0 {
        return Err(LabError::NoSignChange {
            lo,
            hi,
            slope_min: flo.min(fhi) + cone.slope,
            slope_max: flo.max(fhi) + cone.slope,
        });
    }
    let r0 = if flo == 0.0 {
        lo
    } else if fhi == 0.0 {
        hi
    } else {
        bisect_polish(&f, lo, hi, flo)?
    };
    let curve = shoot_neck(cone, r0, grid)?;
    finish(cone, curve, Topology::Neck, r0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub h0_bracket: (f64, f64),
    pub r0_min: f64,
    pub r0_max: f64,
    pub r0_count: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid { h0_bracket: (0.0, 10.0), r0_min: 0.02, r0_max: 12.0, r0_count: 48 }
    }
}

impl SearchGrid {
    pub fn r0_samples(&self) -> Vec<f64> {
        let (a, b) = (self.r0_min.ln(), self.r0_max.ln());
        let k = self.r0_count.max(2);
        (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
    }
}

/// All sheet and neck expanders found on the search grids, deduplicated.
pub fn find_expanders(cone: &ConeSpec, grid: &ShootingGrid, search: &SearchGrid) -> Result<Vec<ExpanderProfile>> {
    let mut out = Vec::new();
    match match_sheet(cone, grid, search.h0_bracket) {
        Ok(e) => out.push(e),
        Err(LabError::NoSignChange { .. }) => {}
        Err(e) => return Err(e),
    }
    if cone.is_degenerate() {
        return Ok(out);
    }
    let samples = search.r0_samples();
    let values: Vec<Option<f64>> =
        samples.par_iter().map(|&r0| neck_terminal_slope(cone, r0, grid).ok().map(|m| m - cone.slope)).collect();
    for i in 0..samples.len() - 1 {
        if let (Some(a), Some(b)) = (values[i], values[i + 1]) {
            if (a < 0.0) != (b < 0.0) {
                if let Ok(e) = match_neck(cone, grid, (samples[i], samples[i + 1])) {
                    let dup =
                        out.iter().any(|o| o.topology == Topology::Neck && (o.parameter - e.parameter).abs() < 1e-6);
                    if !dup {
                        out.push(e);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub slope: f64,
    pub count: usize,
    pub sheet_height: Option<f64>,
    pub neck_radii: Vec<f64>,
    pub max_residual: f64,
    pub error: Option<String>,
}

/// Expander counts over a list of cone slopes; failures are recorded per row.
pub fn sweep_cone_slope(slopes: &[f64], n: usize, grid: &ShootingGrid, search: &SearchGrid) -> Vec<SweepRow> {
    slopes
        .par_iter()
        .map(|&slope| {
            let found = ConeSpec::new(n, slope).and_then(|c| find_expanders(&c, grid, search));
            match found {
                Ok(list) => SweepRow {
                    slope,
                    count: list.len(),
                    sheet_height: list.iter().find(|e| e.topology == Topology::Sheet).map(|e| e.parameter),
                    neck_radii: list.iter().filter(|e| e.topology == Topology::Neck).map(|e| e.parameter).collect(),
                    max_residual: list.iter().map(|e| e.residual_norm).fold(0.0, f64::max),
                    error: None,
                },
                Err(e) => SweepRow {
                    slope,
                    count: 0,
                    sheet_height: None,
                    neck_radii: Vec::new(),
                    max_residual: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Slope at which the count drops from ≥ 2 to 1 along an ascending sweep:
/// midpoint of the bracketing slopes.
pub fn sweep_threshold(rows: &[SweepRow]) -> Option<f64> {
    rows.windows(2).find(|w| w[0].count >= 2 && w[1].count == 1).map(|w| 0.5 * (w[0].slope + w[1].slope))
}

/// Fold of the neck branch: the largest slope reached by any neck, located by
/// golden-section search in r0. Returns (r0, slope).
pub fn neck_fold(n: usize, grid: &ShootingGrid, search: &SearchGrid) -> Result<(f64, f64)> {
    let cone = ConeSpec::new(n, 1.0)?;
    let samples = search.r0_samples();
    let vals: Vec<f64> =
        samples.par_iter().map(|&r| neck_terminal_slope(&cone, r, grid).unwrap_or(f64::NEG_INFINITY)).collect();
    let (imax, _) =
        vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    if !vals[imax].is_finite() {
        return Err(LabError::Topology { sigma: 0.0, p: 0.0 });
    }
    let mut a = samples[imax.saturating_sub(1)];
    let mut b = samples[(imax + 1).min(samples.len() - 1)];
    let g = |r: f64| neck_terminal_slope(&cone, r, grid);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = g(x1)?;
    let mut f2 = g(x2)?;
    while b - a > 1e-6 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = g(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = g(x1)?;
        }
    }
    let r = 0.5 * (a + b);
    Ok((r, g(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_height_is_exact_plane() {
        let cone = ConeSpec::new(2, 0.5).unwrap();
        let c = shoot_sheet(&cone, 0.0, &ShootingGrid::default()).unwrap();
        assert!(c.p.iter().all(|v| *v == 0.0) && c.theta.iter().all(|v| *v == 0.0));
        assert_eq!(residual_norm(&c), 0.0);
    }

    #[test]
    fn odd_symmetry_of_sheets() {
        let cone = ConeSpec::new(2, 0.5).unwrap();
        let g = ShootingGrid::default();
        let up = shoot_sheet(&cone, 0.5, &g).unwrap();
        let down = shoot_sheet(&cone, -0.5, &g).unwrap();
        assert_eq!(up.len(), down.len());
        for j in 0..up.len() {
            assert!((up.p[j] + down.p[j]).abs() < 1e-12);
            assert!((up.q[j] - down.q[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn neck_is_mirror_symmetric() {
        let cone = ConeSpec::new(2, 0.4).unwrap();
        let c = shoot_neck(&cone, 1.0, &ShootingGrid::default()).unwrap();
        let len = c.len();
        for j in 0..len {
            assert_eq!(c.p[j], -c.p[len - 1 - j]);
            assert_eq!(c.q[j], c.q[len - 1 - j]);
        }
        assert!(residual_norm(&c) < 1e-8);
    }

    #[test]
    fn neck_rejects_non_positive_radius() {
        let cone = ConeSpec::new(2, 0.4).unwrap();
        assert!(shoot_neck(&cone, 0.0, &ShootingGrid::default()).is_err());
    }
}

//! CSV and JSON files: profiles, spectra, trajectories, sweep tables and
//! three-function samples. Floats are written in shortest round-trip form.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::duhamel::{Provenance, Trajectory};
use crate::error::{LabError, Result};
use crate::expander::{ExpanderProfile, SweepRow, Topology};
use crate::geometry::{ConeSpec, EndKind, ProfileCurve};
use crate::modes_mz::MzTrajectory;
use crate::spectral::SpectralData;

pub const PROFILE_COLUMNS: [&str; 9] = ["sigma", "p", "q", "theta", "H", "xdotN", "A2", "log_weight", "speed"];

/// First line of a profile file, after a `#`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileHeader {
    pub n: usize,
    /// Total arc length.
    #[serde(rename = "L")]
    pub length: f64,
    pub spacing: f64,
    pub start: EndKind,
    pub end: EndKind,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflected: Option<bool>,
}

impl ProfileHeader {
    pub fn for_curve(c: &ProfileCurve) -> Self {
        ProfileHeader {
            n: c.n,
            length: c.total_length(),
            spacing: c.spacing,
            start: c.start,
            end: c.end,
            nodes: c.len(),
            cone: None,
            topology: None,
            parameter: None,
            residual_norm: None,
            reflected: None,
        }
    }

    pub fn for_expander(e: &ExpanderProfile) -> Self {
        ProfileHeader {
            cone: Some(e.cone),
            topology: Some(e.topology),
            parameter: Some(e.parameter),
            residual_norm: Some(e.residual_norm),
            reflected: Some(e.reflected),
            ..Self::for_curve(&e.curve)
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Shortest string that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| LabError::InvalidInput(format!("not a number: {s:?}")))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_columns(path: &Path, header_line: Option<String>, names: &[&str], cols: &[&[f64]]) -> Result<()> {
    create_parent(path)?;
    let mut file = fs::File::create(path)?;
    if let Some(h) = header_line {
        writeln!(file, "# {h}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(names)?;
    let rows = cols.first().map_or(0, |c| c.len());
    for r in 0..rows {
        w.write_record(cols.iter().map(|c| fmt_f64(c[r])))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads named float columns; `#` lines are skipped.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let headers = r.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| LabError::InvalidInput(format!("{}: missing column {n}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, &i) in cols.iter_mut().zip(&idx) {
            c.push(parse_f64(rec.get(i).unwrap_or(""))?);
        }
    }
    Ok(cols)
}

/// One named float column of a CSV file.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    Ok(read_columns(path, &[name])?.pop().unwrap())
}

pub fn write_profile(path: &Path, curve: &ProfileCurve, header: &ProfileHeader) -> Result<()> {
    let cols: [&[f64]; 9] = [
        &curve.sigma,
        &curve.p,
        &curve.q,
        &curve.theta,
        &curve.mean_curvature,
        &curve.x_dot_n,
        &curve.a2,
        &curve.log_weight,
        &curve.speed,
    ];
    write_columns(path, Some(serde_json::to_string(header)?), &PROFILE_COLUMNS, &cols)
}

pub fn write_expander(path: &Path, e: &ExpanderProfile) -> Result<()> {
    write_profile(path, &e.curve, &ProfileHeader::for_expander(e))
}

/// Reads a profile and rebuilds the curve from (q, p, θ, speed); the stored
/// derived columns must agree with the rebuilt ones to 1e−12.
pub fn read_profile(path: &Path) -> Result<(ProfileCurve, ProfileHeader)> {
    let file = fs::File::open(path)?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    let json = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| LabError::InvalidInput(format!("{}: missing JSON header line", path.display())))?;
    let header: ProfileHeader = serde_json::from_str(json.trim())?;
    let mut names = PROFILE_COLUMNS.to_vec();
    let has_speed = {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let h = r.headers()?.clone();
        h.iter().any(|x| x.trim() == "speed")
    };
    if !has_speed {
        names.pop();
    }
    let mut cols = read_columns(path, &names)?;
    if cols[0].len() != header.nodes {
        return Err(LabError::GridMismatch { expected: header.nodes, got: cols[0].len() });
    }
    let speed = if has_speed { cols.pop().unwrap() } else { vec![1.0; header.nodes] };
    let curve = ProfileCurve::from_parametrized(
        header.n,
        header.spacing,
        cols[2].clone(),
        cols[1].clone(),
        cols[3].clone(),
        speed,
        header.start,
        header.end,
    )?;
    let derived: [(&str, &[f64], &[f64]); 5] = [
        ("sigma", &curve.sigma, &cols[0]),
        ("H", &curve.mean_curvature, &cols[4]),
        ("xdotN", &curve.x_dot_n, &cols[5]),
        ("A2", &curve.a2, &cols[6]),
        ("log_weight", &curve.log_weight, &cols[7]),
    ];
    for (name, rebuilt, stored) in derived {
        for (j, (a, b)) in rebuilt.iter().zip(stored).enumerate() {
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(LabError::InvalidInput(format!("{name} at node {j}: stored {b}, rebuilt {a}")));
            }
        }
    }
    Ok((curve, header))
}

/// Rebuilds an expander from a profile file that carries cone metadata.
pub fn read_expander(path: &Path) -> Result<ExpanderProfile> {
    let (curve, h) = read_profile(path)?;
    expander_from(curve, h, path)
}

/// Attaches header metadata to a curve read from `path`.
pub fn expander_from(curve: ProfileCurve, h: ProfileHeader, path: &Path) -> Result<ExpanderProfile> {
    let missing = || LabError::InvalidInput(format!("{}: header lacks expander metadata", path.display()));
    Ok(ExpanderProfile {
        cone: h.cone.ok_or_else(missing)?,
        topology: h.topology.ok_or_else(missing)?,
        parameter: h.parameter.ok_or_else(missing)?,
        residual_norm: h.residual_norm.unwrap_or_else(|| crate::geometry::residual_norm(&curve)),
        reflected: h.reflected.unwrap_or(false),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumManifest {
    pub lambdas: Vec<f64>,
    #[serde(rename = "I")]
    pub index: usize,
    #[serde(rename = "K")]
    pub nullity: usize,
    pub tol_zero: f64,
    pub ambiguous: bool,
    pub modes: Vec<String>,
    pub log_mass: Vec<f64>,
    /// Base profile, relative to the manifest.
    pub profile: String,
}

/// Name of the copy of the base profile kept next to spectra and trajectories.
pub const BASE_PROFILE: &str = "profile.csv";

/// `spec.json`, `mode_XXX.csv` (sigma, phi) and the base profile in `dir`.
pub fn write_spectrum(dir: &Path, spec: &SpectralData, curve: &ProfileCurve, header: &ProfileHeader) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sigma = &curve.sigma;
    write_profile(&dir.join(BASE_PROFILE), curve, header)?;
    let mut modes = Vec::new();
    for (i, phi) in spec.phis.iter().enumerate() {
        if phi.len() != sigma.len() {
            return Err(LabError::GridMismatch { expected: sigma.len(), got: phi.len() });
        }
        let name = format!("mode_{:03}.csv", i + 1);
        write_columns(&dir.join(&name), None, &["sigma", "phi"], &[sigma, phi])?;
        modes.push(name);
    }
    let m = SpectrumManifest {
        lambdas: spec.lambdas.clone(),
        index: spec.index,
        nullity: spec.nullity,
        tol_zero: spec.tol_zero,
        ambiguous: spec.ambiguous,
        modes,
        log_mass: spec.log_mass.clone(),
        profile: BASE_PROFILE.into(),
    };
    write_json(&dir.join("spec.json"), &m)
}

fn manifest_location(path: &Path, file: &str) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.to_path_buf(), path.join(file))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    }
}

/// Spectrum and its base profile. Accepts the directory or `spec.json` itself.
pub fn read_spectrum(path: &Path) -> Result<(SpectralData, ProfileCurve, ProfileHeader)> {
    let (dir, file) = manifest_location(path, "spec.json");
    let m: SpectrumManifest = read_json(&file)?;
    let (curve, header) = read_profile(&dir.join(&m.profile))?;
    if m.modes.len() != m.lambdas.len() {
        return Err(LabError::InvalidInput("spec.json: modes and lambdas differ in length".into()));
    }
    let phis = m
        .modes
        .iter()
        .map(|name| {
            let phi = read_columns(&dir.join(name), &["phi"])?.pop().unwrap();
            if phi.len() != m.log_mass.len() {
                return Err(LabError::GridMismatch { expected: m.log_mass.len(), got: phi.len() });
            }
            Ok(phi)
        })
        .collect::<Result<Vec<_>>>()?;
    if curve.len() != m.log_mass.len() {
        return Err(LabError::GridMismatch { expected: m.log_mass.len(), got: curve.len() });
    }
    let spec = SpectralData {
        lambdas: m.lambdas,
        phis,
        index: m.index,
        nullity: m.nullity,
        tol_zero: m.tol_zero,
        ambiguous: m.ambiguous,
        log_mass: m.log_mass,
    };
    Ok((spec, curve, header))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryManifest {
    pub provenance: Provenance,
    pub nodes: usize,
    pub times: Vec<f64>,
    pub frames: Vec<String>,
    pub coeffs: Vec<Vec<f64>>,
    pub profile: String,
}

/// `manifest.json`, `frame_XXXXX.csv` (sigma, v) and the base profile in `dir`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, curve: &ProfileCurve, header: &ProfileHeader) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sigma = &curve.sigma;
    write_profile(&dir.join(BASE_PROFILE), curve, header)?;
    let mut frames = Vec::new();
    for (k, f) in traj.frames.iter().enumerate() {
        if f.len() != sigma.len() {
            return Err(LabError::GridMismatch { expected: sigma.len(), got: f.len() });
        }
        let name = format!("frame_{k:05}.csv");
        write_columns(&dir.join(&name), None, &["sigma", "v"], &[sigma, f])?;
        frames.push(name);
    }
    let m = TrajectoryManifest {
        provenance: traj.provenance,
        nodes: sigma.len(),
        times: traj.times.clone(),
        frames,
        coeffs: traj.coeffs.clone(),
        profile: BASE_PROFILE.into(),
    };
    write_json(&dir.join("manifest.json"), &m)
}

/// Trajectory and its base profile. Accepts the directory or `manifest.json`.
pub fn read_trajectory(path: &Path) -> Result<(Trajectory, ProfileCurve, ProfileHeader)> {
    let (dir, file) = manifest_location(path, "manifest.json");
    let m: TrajectoryManifest = read_json(&file)?;
    let (curve, header) = read_profile(&dir.join(&m.profile))?;
    if curve.len() != m.nodes {
        return Err(LabError::GridMismatch { expected: m.nodes, got: curve.len() });
    }
    if m.frames.len() != m.times.len() || m.coeffs.len() != m.times.len() {
        return Err(LabError::InvalidInput("manifest: times, frames and coeffs differ in length".into()));
    }
    let frames = m
        .frames
        .iter()
        .map(|name| {
            let v = read_columns(&dir.join(name), &["v"])?.pop().unwrap();
            if v.len() != m.nodes {
                return Err(LabError::GridMismatch { expected: m.nodes, got: v.len() });
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Trajectory { times: m.times, frames, coeffs: m.coeffs, provenance: m.provenance }, curve, header))
}

pub fn write_bifurcation(path: &Path, rows: &[SweepRow]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["slope", "count", "sheet_height", "neck_radii", "max_residual", "error"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.slope),
            r.count.to_string(),
            r.sheet_height.map(fmt_f64).unwrap_or_default(),
            r.neck_radii.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";"),
            fmt_f64(r.max_residual),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bifurcation(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let opt = |s: String| if s.is_empty() { Ok(None) } else { parse_f64(&s).map(Some) };
        rows.push(SweepRow {
            slope: parse_f64(&field(0))?,
            count: field(1).parse().map_err(|_| LabError::InvalidInput(format!("bad count {:?}", field(1))))?,
            sheet_height: opt(field(2))?,
            neck_radii: field(3).split(';').filter(|s| !s.is_empty()).map(parse_f64).collect::<Result<_>>()?,
            max_residual: parse_f64(&field(4))?,
            error: Some(field(5)).filter(|s| !s.is_empty()),
        });
    }
    Ok(rows)
}

pub fn write_mz(path: &Path, t: &MzTrajectory) -> Result<()> {
    write_columns(path, None, &["s", "x", "y", "z"], &[&t.times, &t.x, &t.y, &t.z])
}

pub fn read_mz(path: &Path, eps: f64) -> Result<MzTrajectory> {
    let mut c = read_columns(path, &["s", "x", "y", "z"])?;
    let z = c.pop().unwrap();
    let y = c.pop().unwrap();
    let x = c.pop().unwrap();
    let s = c.pop().unwrap();
    MzTrajectory::new(s, x, y, z, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0, f64::MIN_POSITIVE] {
            assert_eq!(parse_f64(&fmt_f64(x)).unwrap().to_bits(), x.to_bits());
        }
        assert!(parse_f64(&fmt_f64(f64::INFINITY)).unwrap().is_infinite());
    }
}

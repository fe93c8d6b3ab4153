mod common;

use std::fs;

use expander_lab::duhamel::{synthesize, Provenance, Trajectory};
use expander_lab::error::LabError;
use expander_lab::expander::{ExpanderProfile, SweepRow};
use expander_lab::io::{
    read_bifurcation, read_column, read_expander, read_mz, read_profile, read_spectrum, read_trajectory,
    write_bifurcation, write_expander, write_mz, write_spectrum, write_trajectory, ProfileHeader, BASE_PROFILE,
};
use expander_lab::modes_mz::mz_synthesize;

use common::{fixture, max_abs_diff};

fn assert_profile_close(a: &ExpanderProfile, b: &ExpanderProfile) {
    let (ca, cb) = (&a.curve, &b.curve);
    assert_eq!(ca.len(), cb.len());
    assert_eq!((ca.start, ca.end, ca.n), (cb.start, cb.end, cb.n));
    for (x, y) in [
        (&ca.sigma, &cb.sigma),
        (&ca.p, &cb.p),
        (&ca.q, &cb.q),
        (&ca.theta, &cb.theta),
        (&ca.mean_curvature, &cb.mean_curvature),
        (&ca.x_dot_n, &cb.x_dot_n),
        (&ca.a2, &cb.a2),
        (&ca.log_weight, &cb.log_weight),
    ] {
        assert!(max_abs_diff(x, y) <= 1e-12);
    }
    assert_eq!((a.topology, a.parameter, a.cone), (b.topology, b.parameter, b.cone));
}

#[test]
fn profiles_round_trip() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    for (name, e) in [("neck.csv", &f.neck), ("sheet.csv", &f.sheet)] {
        let path = dir.path().join(name);
        write_expander(&path, e).unwrap();
        let back = read_expander(&path).unwrap();
        assert_profile_close(e, &back);
        // a second pass is byte-identical
        let again = dir.path().join(format!("again_{name}"));
        write_expander(&again, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }
}

#[test]
fn corrupted_derived_column_is_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neck.csv");
    write_expander(&path, &f.neck).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let h_col = lines[1].split(',').position(|c| c == "H").unwrap();
    let mut cells: Vec<String> = lines[12].split(',').map(String::from).collect();
    let h: f64 = cells[h_col].parse().unwrap();
    cells[h_col] = format!("{:?}", h + 1e-6);
    lines[12] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = read_profile(&path).unwrap_err();
    assert!(matches!(err, LabError::InvalidInput(ref m) if m.starts_with("H at node 10")), "{err}");
}

#[test]
fn header_problems_are_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neck.csv");
    write_expander(&path, &f.neck).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    let extra = text.replacen("{\"n\":", "{\"colour\":1,\"n\":", 1);
    fs::write(&path, extra).unwrap();
    assert!(matches!(read_profile(&path), Err(LabError::Json(_))));

    let (first, rest) = text.split_once('\n').unwrap();
    fs::write(&path, rest).unwrap();
    assert!(matches!(read_profile(&path), Err(LabError::InvalidInput(_))));

    let short: Vec<&str> = text.lines().collect();
    fs::write(&path, short[..short.len() - 3].join("\n")).unwrap();
    assert!(matches!(read_profile(&path), Err(LabError::GridMismatch { .. })));

    // a bare curve header has no cone metadata
    let mut header: ProfileHeader = serde_json::from_str(first.trim_start_matches("# ")).unwrap();
    header.cone = None;
    let bare = format!("# {}\n{rest}", serde_json::to_string(&header).unwrap());
    fs::write(&path, bare).unwrap();
    assert!(read_profile(&path).is_ok());
    assert!(matches!(read_expander(&path), Err(LabError::InvalidInput(_))));
}

#[test]
fn spectrum_round_trips() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec");
    write_spectrum(&out, &f.spec, &f.neck.curve, &ProfileHeader::for_expander(&f.neck)).unwrap();
    assert!(out.join(BASE_PROFILE).exists() && out.join("mode_012.csv").exists());
    for path in [out.clone(), out.join("spec.json")] {
        let (spec, curve, header) = read_spectrum(&path).unwrap();
        assert_eq!(spec.lambdas, f.spec.lambdas);
        assert_eq!((spec.index, spec.nullity, spec.ambiguous), (f.spec.index, f.spec.nullity, f.spec.ambiguous));
        assert_eq!(spec.phis, f.spec.phis);
        assert_eq!(spec.log_mass, f.spec.log_mass);
        assert_eq!(curve.len(), f.neck.curve.len());
        assert_eq!(header.topology, Some(f.neck.topology));
    }
    let phi1 = read_column(&out.join("mode_001.csv"), "phi").unwrap();
    assert_eq!(phi1, f.spec.phis[0]);
    assert!(read_column(&out.join("mode_001.csv"), "psi").is_err());

    fs::remove_file(out.join("mode_003.csv")).unwrap();
    assert!(matches!(read_spectrum(&out), Err(LabError::Io(_) | LabError::Csv(_))));
}

#[test]
fn trajectory_round_trips() {
    let f = fixture();
    let times = vec![-1.0, -0.5, 0.0];
    let frames: Vec<Vec<f64>> = times
        .iter()
        .map(|s: &f64| {
            let mut c = vec![0.0; f.spec.modes()];
            c[0] = 1e-3 * (-f.spec.lambdas[0] * s).exp();
            c[3] = 1e-4 * s;
            synthesize(&c, &f.spec)
        })
        .collect();
    let traj = Trajectory::new(times, frames, &f.spec, Provenance::Ancient).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj");
    write_trajectory(&out, &traj, &f.neck.curve, &ProfileHeader::for_expander(&f.neck)).unwrap();
    let (back, curve, _) = read_trajectory(&out).unwrap();
    assert_eq!(back.times, traj.times);
    assert_eq!(back.frames, traj.frames);
    assert_eq!(back.coeffs, traj.coeffs);
    assert_eq!(back.provenance, Provenance::Ancient);
    assert_eq!(curve.q, f.neck.curve.q);
}

#[test]
fn bifurcation_table_round_trips() {
    let rows = vec![
        SweepRow {
            slope: 0.43,
            count: 3,
            sheet_height: Some(1.234567890123),
            neck_radii: vec![0.5, 1.0 / 3.0],
            max_residual: 1e-11,
            error: None,
        },
        SweepRow { slope: 0.5, count: 1, sheet_height: Some(2.0), neck_radii: vec![], max_residual: 0.0, error: None },
        SweepRow {
            slope: 0.9,
            count: 0,
            sheet_height: None,
            neck_radii: vec![],
            max_residual: 0.0,
            error: Some("no sign change, in [0, 5]".into()),
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bifurcation.csv");
    write_bifurcation(&path, &rows).unwrap();
    assert_eq!(read_bifurcation(&path).unwrap(), rows);
    write_bifurcation(&path, &[]).unwrap();
    assert!(read_bifurcation(&path).unwrap().is_empty());
}

#[test]
fn mz_samples_round_trip() {
    let t = mz_synthesize(3, 0.05, -2.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mz.csv");
    write_mz(&path, &t).unwrap();
    let back = read_mz(&path, 0.05).unwrap();
    assert_eq!((back.times, back.x, back.y, back.z), (t.times, t.x, t.y, t.z));
    assert!(read_mz(&path, -1.0).is_err());
}

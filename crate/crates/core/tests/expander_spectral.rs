mod common;

use approx::assert_relative_eq;
use expander_lab::error::LabError;
use expander_lab::expander::{
    find_expanders, match_sheet, sheet_terminal_slope, shoot_sheet, sweep_cone_slope, SearchGrid, ShootingGrid,
    Topology,
};
use expander_lab::geometry::{residual_norm, ConeSpec};
use expander_lab::numeric::weighted_inner;
use expander_lab::spectral::{
    assemble_stability, eigen_residual, eigensolve, rayleigh_minimize, rayleigh_quotient, verify_decay,
};

use common::fixture;

/// Radial eigenvalues of −L on the flat plane through the origin: the
/// substitution φ = e^{−|x|²/8}ψ turns −L into −Δ + |x|²/16 + n/4 + ½, whose
/// radial oscillator levels are (n+1)/2 + m.
fn plane_eigenvalue(n: usize, m: usize) -> f64 {
    (n as f64 + 1.0) / 2.0 + m as f64
}

fn plane_levels(n: usize, grid: &ShootingGrid) -> Vec<f64> {
    let plane = shoot_sheet(&ConeSpec::new(n, 0.0).unwrap(), 0.0, grid).unwrap();
    let spec = eigensolve(&assemble_stability(&plane).unwrap(), 4).unwrap();
    assert_eq!((spec.index, spec.nullity), (0, 0));
    spec.lambdas
}

#[test]
fn plane_spectrum_matches_oscillator_levels() {
    for (m, l) in plane_levels(2, &ShootingGrid::default()).iter().enumerate() {
        assert!((l - plane_eigenvalue(2, m)).abs() < 2e-3, "level {m}: {l}");
    }
}

#[test]
fn plane_spectrum_converges_at_second_order_in_three_dimensions() {
    let grid = ShootingGrid::default();
    let coarse = plane_levels(3, &grid);
    let fine = plane_levels(3, &grid.halved());
    for m in 0..4 {
        let (ec, ef) = ((coarse[m] - plane_eigenvalue(3, m)).abs(), (fine[m] - plane_eigenvalue(3, m)).abs());
        assert!(ef < 1e-3, "level {m}: {}", fine[m]);
        if ec > 1e-6 {
            let order = (ec / ef).log2();
            assert!(order > 1.8, "level {m}: order {order}");
        }
    }
}

#[test]
fn plane_operator_on_constants() {
    let plane = shoot_sheet(&ConeSpec::new(2, 0.0).unwrap(), 0.0, &ShootingGrid::default()).unwrap();
    let op = assemble_stability(&plane).unwrap();
    let lv = op.energy.apply_linear(&vec![1.0; plane.len()]);
    // interior nodes away from the pinned truncation
    let len = plane.len();
    for j in 1..len - 20 {
        assert!((lv[j] + 0.5).abs() < 1e-10, "node {j}: {}", lv[j]);
    }
}

#[test]
fn degenerate_cone_gives_only_the_plane() {
    let list =
        find_expanders(&ConeSpec::new(2, 0.0).unwrap(), &ShootingGrid::default(), &SearchGrid::default()).unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0].topology, Topology::Sheet);
    assert!(list[0].curve.p.iter().all(|p| *p == 0.0));
    assert_eq!(residual_norm(&list[0].curve), 0.0);
}

#[test]
fn three_expanders_on_the_wide_side_one_on_the_narrow_side() {
    let f = fixture();
    for e in [&f.neck, &f.outer_neck, &f.sheet] {
        assert!(e.residual_norm < 1e-8, "{:?} residual {}", e.topology, e.residual_norm);
    }
    assert!(f.neck.parameter < f.outer_neck.parameter);
    let narrow =
        find_expanders(&ConeSpec::new(2, 0.5).unwrap(), &ShootingGrid::default(), &SearchGrid::default()).unwrap();
    assert_eq!(narrow.len(), 1);
    assert_eq!(narrow[0].topology, Topology::Sheet);
}

#[test]
fn sheet_root_agrees_with_independent_secant() {
    let cone = ConeSpec::new(2, 0.5).unwrap();
    let grid = ShootingGrid::default();
    let sheet = match_sheet(&cone, &grid, (0.0, 5.0)).unwrap();
    assert!(sheet.parameter > 0.0 && sheet.parameter < 5.0);
    let g = |h: f64| sheet_terminal_slope(&cone, h, &grid).unwrap() - cone.slope;
    let (mut a, mut b) = (sheet.parameter - 0.05, sheet.parameter + 0.05);
    let (mut fa, mut fb) = (g(a), g(b));
    for _ in 0..30 {
        if (b - a).abs() < 1e-13 || fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = g(b);
    }
    assert!((b - sheet.parameter).abs() < 1e-8, "secant {b} vs {}", sheet.parameter);
}

#[test]
fn sheet_bracket_without_root() {
    let err = match_sheet(&ConeSpec::new(2, 0.5).unwrap(), &ShootingGrid::default(), (3.0, 5.0)).unwrap_err();
    assert!(matches!(err, LabError::NoSignChange { .. }), "{err}");
}

#[test]
fn sweep_rows_match_direct_solves() {
    let grid = ShootingGrid::default();
    assert!(sweep_cone_slope(&[], 2, &grid, &SearchGrid::default()).is_empty());
    let rows = sweep_cone_slope(&[common::SLOPE], 2, &grid, &SearchGrid::default());
    let f = fixture();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].count, 3);
    assert_eq!(rows[0].sheet_height, Some(f.sheet.parameter));
    assert_eq!(rows[0].neck_radii, vec![f.neck.parameter, f.outer_neck.parameter]);
}

#[test]
fn neck_spectrum_is_orthonormal_and_unstable() {
    let f = fixture();
    let s = &f.spec;
    assert_eq!(s.index, 1);
    assert_eq!(s.nullity, 0);
    for i in 0..s.modes() {
        for j in 0..=i {
            let ip = weighted_inner(&s.log_mass, &s.phis[i], &s.phis[j]);
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-8, "<phi{i}, phi{j}> = {ip}");
        }
    }
    let op = assemble_stability(&f.neck.curve).unwrap();
    assert_relative_eq!(rayleigh_quotient(&op, &s.phis[0]), s.lambdas[0], max_relative = 1e-8);
    assert!(eigen_residual(&op, s.lambdas[0], &s.phis[0]) < 1e-6);
    let (l_min, _) = rayleigh_minimize(&op, 4000);
    assert!(l_min < 0.0);
    assert!((l_min - s.lambdas[0]).abs() < 1e-4 * s.lambdas[0].abs(), "{l_min} vs {}", s.lambdas[0]);
}

#[test]
fn ground_state_keeps_one_sign() {
    let f = fixture();
    let phi = &f.spec.phis[0];
    let active = f.energy.active();
    let (lo, hi) = phi[active].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    assert!(lo * hi > 0.0, "ground state changes sign: [{lo}, {hi}]");
}

#[test]
fn wide_zero_threshold_is_ambiguous() {
    let f = fixture();
    let wide = f.spec.clone().with_tol_zero(2.0 * f.spec.lambdas[0].abs());
    assert!(wide.ambiguous);
    assert_eq!(wide.index, 0);
    assert_eq!(wide.nullity, 1);
}

#[test]
fn decay_check() {
    let f = fixture();
    assert!(verify_decay(&f.neck.curve, &f.spec.phis[0], 0.1).pass);
    let ones = f.energy.pin(&vec![1.0; f.neck.curve.len()]);
    assert!(!verify_decay(&f.neck.curve, &ones, 0.1).pass);

    let plane = shoot_sheet(&ConeSpec::new(2, 0.0).unwrap(), 0.0, &ShootingGrid::default()).unwrap();
    let ground = eigensolve(&assemble_stability(&plane).unwrap(), 1).unwrap();
    assert!(verify_decay(&plane, &ground.phis[0], 0.24).pass);
    assert!(!verify_decay(&plane, &ground.phis[0], 0.26).pass);
}

#[test]
fn stencil_scale_on_a_cone_like_profile() {
    let f = fixture();
    let coarse = assemble_stability(&f.outer_neck.curve).unwrap().max_entry();
    let grid = ShootingGrid::default().halved();
    let cone = ConeSpec::new(2, common::SLOPE).unwrap();
    let fine: Vec<_> = find_expanders(&cone, &grid, &SearchGrid::default())
        .unwrap()
        .into_iter()
        .filter(|e| e.topology == Topology::Neck)
        .collect();
    let outer = fine.iter().max_by(|a, b| a.parameter.total_cmp(&b.parameter)).unwrap();
    let ratio = assemble_stability(&outer.curve).unwrap().max_entry() / coarse;
    assert!((ratio - 4.0).abs() < 0.2, "entry ratio under halving {ratio}");
}

fn inner_neck_lambda(grid: &ShootingGrid) -> f64 {
    let cone = ConeSpec::new(2, common::SLOPE).unwrap();
    let neck = find_expanders(&cone, grid, &SearchGrid::default())
        .unwrap()
        .into_iter()
        .filter(|e| e.topology == Topology::Neck)
        .min_by(|a, b| a.parameter.total_cmp(&b.parameter))
        .unwrap();
    eigensolve(&assemble_stability(&neck.curve).unwrap(), 2).unwrap().lambdas[0]
}

#[test]
fn ground_eigenvalue_ignores_the_truncation_radius() {
    let base = ShootingGrid::default();
    let near = inner_neck_lambda(&ShootingGrid { r_max: 20.0, ..base });
    let far = inner_neck_lambda(&base);
    assert!((near - far).abs() <= 1e-6, "{near} vs {far}");
}

#[test]
fn ground_eigenvalue_converges_at_second_order() {
    let fine = ShootingGrid::default().halved();
    let l: Vec<f64> =
        [ShootingGrid { spacing: 0.04, ..fine }, ShootingGrid::default(), fine].iter().map(inner_neck_lambda).collect();
    let order = ((l[0] - l[1]) / (l[1] - l[2])).abs().log2();
    assert!((order - 2.0).abs() <= 0.1, "order {order} from {l:?}");
}

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expander_lab::duhamel::{synthesize, Provenance, Trajectory};
use expander_lab::entropy::{
    compare_entropy_definitions, expansion_check, gradient_n, lojasiewicz_ratio, max_cutoff, monotonicity_check,
    relative_entropy, reverse_poincare_check,
};
use expander_lab::error::LabError;
use expander_lab::expander::{find_expanders, SearchGrid, ShootingGrid};
use expander_lab::flow::{morse_flow_line, unrescale, Flow, FlowConfig, MorseConfig};
use expander_lab::geometry::ConeSpec;
use expander_lab::graph_energy::GraphEnergy;
use expander_lab::spectral::{assemble_stability, eigensolve};

use common::{bump, fixture, max_abs_diff};

fn entropy(energy: &GraphEnergy, v: &[f64]) -> f64 {
    relative_entropy(energy, v, max_cutoff(energy)).unwrap().value
}

fn mode(t: f64, k: usize) -> Vec<f64> {
    let f = fixture();
    let mut c = vec![0.0; f.spec.modes()];
    c[k] = t;
    synthesize(&c, &f.spec)
}

#[test]
fn entropy_is_quadratic_near_the_expander() {
    let f = fixture();
    let zero = vec![0.0; f.neck.curve.len()];
    assert_eq!(entropy(&f.energy, &zero), 0.0);
    let t = 1e-3;
    let l1 = f.spec.lambdas[0];
    let e_plus = entropy(&f.energy, &mode(t, 0));
    let e_minus = entropy(&f.energy, &mode(-t, 0));
    let quad = 0.5 * l1 * t * t;
    assert!(((e_plus - quad) / quad).abs() < 0.1, "{e_plus} vs {quad}");
    // odd part is the cubic remainder
    assert!((e_plus - e_minus).abs() < 50.0 * t.powi(3), "{e_plus} vs {e_minus}");
}

#[test]
fn gradient_vanishes_at_zero_and_is_linear_near_it() {
    let f = fixture();
    let zero = vec![0.0; f.neck.curve.len()];
    assert!(gradient_n(&f.energy, &zero).unwrap().iter().all(|x| x.abs() < 1e-14));
    for t in [1e-3, 5e-4] {
        let n = f.energy.norm(&gradient_n(&f.energy, &mode(t, 0)).unwrap());
        let lin = f.spec.lambdas[0].abs() * t;
        assert!((n - lin).abs() < 20.0 * t * t, "t = {t}: {n} vs {lin}");
    }
}

#[test]
fn directional_derivatives_match_the_gradient() {
    let f = fixture();
    let v = mode(2e-3, 0);
    let g = gradient_n(&f.energy, &v).unwrap();
    let mid = 0.5 * f.neck.curve.total_length();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let w = bump(&f.energy, mid + rng.gen_range(-3.0..3.0), rng.gen_range(0.5..2.0));
        let scale = f.energy.norm(&w);
        let w: Vec<f64> = w.iter().map(|x| x / scale).collect();
        let eps = 1e-5;
        let shift = |s: f64| -> Vec<f64> { v.iter().zip(&w).map(|(a, b)| a + s * b).collect() };
        let fd = (entropy(&f.energy, &shift(eps)) - entropy(&f.energy, &shift(-eps))) / (2.0 * eps);
        let exact = f.energy.inner(&g, &w);
        assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(f.energy.norm(&g)), "{fd} vs {exact}");
    }
}

#[test]
fn expansion_gap_is_cubic() {
    let f = fixture();
    let gaps: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|t| expansion_check(&f.energy, &mode(*t, 0)).unwrap().expansion_gap.abs())
        .collect();
    for w in gaps.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 3.0).abs() < 0.3, "gap exponent {order} from {gaps:?}");
    }
    let zero = expansion_check(&f.energy, &vec![0.0; f.neck.curve.len()]).unwrap();
    assert_eq!((zero.e_star, zero.e_quadratic, zero.expansion_gap), (0.0, 0.0, 0.0));
}

#[test]
fn reverse_poincare_cases() {
    let f = fixture();
    assert!(reverse_poincare_check(&f.energy, &mode(1e-3, 0)).unwrap().pass);
    let sigma = &f.neck.curve.sigma;
    let mid = 0.5 * f.neck.curve.total_length();
    let env = bump(&f.energy, mid + 1.0, 1.0);
    let wiggle: Vec<f64> = env.iter().zip(sigma).map(|(e, s)| 1e-5 * e * (12.0 * s).sin()).collect();
    let rep = reverse_poincare_check(&f.energy, &f.energy.pin(&wiggle)).unwrap();
    assert!(rep.pass && rep.e_star > 0.0, "{rep:?}");
    let zero = reverse_poincare_check(&f.energy, &vec![0.0; f.neck.curve.len()]).unwrap();
    assert!(zero.pass && zero.e_star == 0.0);
}

#[test]
fn lojasiewicz_ratio_on_eigenfunctions() {
    let f = fixture();
    for k in [0, 1, 3] {
        let l = f.spec.lambdas[k].abs();
        let r = lojasiewicz_ratio(&f.energy, &f.spec, &mode(1e-4, k)).unwrap();
        let want = 1.0 / (2.0 * l).sqrt();
        assert!((r.ratio / want - 1.0).abs() < 0.02, "mode {k}: {} vs {want}", r.ratio);
        assert!(r.pass);
    }
    let degenerate = f.spec.clone().with_tol_zero(2.0 * f.spec.lambdas[0].abs());
    let err = lojasiewicz_ratio(&f.energy, &degenerate, &mode(1e-4, 0)).unwrap_err();
    assert!(matches!(err, LabError::Hypothesis(_)), "{err}");
}

#[test]
fn entropy_definitions_agree_for_fast_decay_only() {
    let f = fixture();
    let top = max_cutoff(&f.energy).floor();
    let radii = [4.0, 6.0, 8.0, 10.0, top];
    let zero = compare_entropy_definitions(&f.energy, &vec![0.0; f.neck.curve.len()], &radii).unwrap();
    assert!(zero.iter().all(|r| r.graph_cutoff == 0.0 && r.ball == 0.0));

    let rows = compare_entropy_definitions(&f.energy, &mode(1e-3, 0), &radii).unwrap();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap.abs()).collect();
    // below ~1e-18 the gap is rounding noise
    assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-18), "{gaps:?}");
    assert!(*gaps.last().unwrap() < 1e-6 * gaps[0].max(1e-300) + 1e-15);

    // |x|^{-1} tail: the gap survives at every radius
    let slow: Vec<f64> = (0..f.neck.curve.len()).map(|j| 1e-3 / (1.0 + f.neck.curve.radius(j))).collect();
    let rows = compare_entropy_definitions(&f.energy, &f.energy.pin(&slow), &radii).unwrap();
    assert!(rows.iter().all(|r| r.gap.abs() > 1e3 * gaps.last().unwrap()), "{rows:?}");
}

#[test]
fn zero_is_a_fixed_point_of_the_flow() {
    let f = fixture();
    let flow = Flow::new(&f.energy, FlowConfig::default()).unwrap();
    let st = flow.initial_state(vec![0.0; f.neck.curve.len()], 0.0).unwrap();
    let (traj, end) = flow.evolve(st, 2.0, 0.5, Some(&f.spec)).unwrap();
    assert_eq!(end.s, 2.0);
    assert!(traj.frames.iter().all(|fr| fr.iter().all(|x| *x == 0.0)));
    let mono = monotonicity_check(&f.energy, &traj).unwrap();
    assert!(mono.energies.iter().all(|e| *e == 0.0));
    assert!(mono.dissipation.iter().all(|d| *d == 0.0));
}

#[test]
fn linear_regime_follows_the_spectrum() {
    let f = fixture();
    let flow = Flow::new(&f.energy, FlowConfig { atol: 1e-14, ..FlowConfig::default() }).unwrap();
    for k in [0, 2] {
        let t = 1e-6;
        let st = flow.initial_state(mode(t, k), 0.0).unwrap();
        let (traj, _) = flow.evolve(st, 0.5, 0.5, Some(&f.spec)).unwrap();
        let grow = f.energy.norm(traj.frames.last().unwrap()) / f.energy.norm(&traj.frames[0]);
        let want = (-f.spec.lambdas[k] * 0.5).exp();
        assert!((grow / want - 1.0).abs() < 1e-4, "mode {k}: {grow} vs {want}");
    }
}

#[test]
fn unstable_mode_drives_monotone_entropy_decay() {
    let f = fixture();
    let flow = Flow::new(&f.energy, FlowConfig::default()).unwrap();
    let mut defects = Vec::new();
    for amp in [0.05, 0.025] {
        let st = flow.initial_state(mode(amp, 0), 0.0).unwrap();
        let (traj, _) = flow.evolve(st, 1.0, 0.05, Some(&f.spec)).unwrap();
        let mono = monotonicity_check(&f.energy, &traj).unwrap();
        assert!(mono.nonincreasing, "max increase rate {}", mono.max_increase_rate);
        assert!(mono.max_energy <= 0.0);
        let c0: Vec<f64> = traj.coeffs.iter().map(|c| c[0]).collect();
        assert!(c0.windows(2).all(|w| w[1].abs() > w[0].abs()), "{c0:?}");
        let early_rate = (c0[1] / c0[0]).ln() / (traj.times[1] - traj.times[0]);
        defects.push((early_rate / -f.spec.lambdas[0] - 1.0).abs());
    }
    // nonlinear correction to the growth rate is linear in the amplitude
    let ratio = defects[0] / defects[1];
    assert!(defects[0] < 0.1 && (ratio - 2.0).abs() < 0.3, "{defects:?}");
}

#[test]
fn unrescaling_scales_a_static_expander() {
    let f = fixture();
    let len = f.neck.curve.len();
    let times = vec![-1.0, 0.0, 1.0, 2.0];
    let traj = Trajectory::new(times.clone(), vec![vec![0.0; len]; 4], &f.spec, Provenance::Flow).unwrap();
    let u = unrescale(&traj, &f.neck.curve, &f.neck.cone, &[0.5, 1.0, 4.0]).unwrap();
    for fr in &u.frames {
        let k = fr.t.sqrt();
        assert_eq!(fr.s, fr.t.ln());
        let want_q: Vec<f64> = f.neck.curve.q.iter().map(|q| k * q).collect();
        let want_p: Vec<f64> = f.neck.curve.p.iter().map(|p| k * p).collect();
        assert!(max_abs_diff(&fr.q, &want_q) < 1e-12 && max_abs_diff(&fr.p, &want_p) < 1e-12);
    }
    assert_eq!(u.frames[1].q, f.neck.curve.q);
    assert!(unrescale(&traj, &f.neck.curve, &f.neck.cone, &[100.0]).is_err());
}

#[test]
fn morse_line_needs_an_unstable_base() {
    let cone = ConeSpec::new(2, 0.5).unwrap();
    let sheet = find_expanders(&cone, &ShootingGrid::default(), &SearchGrid::default()).unwrap().remove(0);
    let spec = eigensolve(&assemble_stability(&sheet.curve).unwrap(), 4).unwrap();
    assert_eq!(spec.index, 0);
    let energy = GraphEnergy::new(&sheet.curve).unwrap();
    let err = morse_flow_line(&sheet, &energy, &spec, &MorseConfig::default()).unwrap_err();
    assert!(matches!(err, LabError::StableBase), "{err}");
}

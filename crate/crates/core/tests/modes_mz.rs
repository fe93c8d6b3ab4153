mod common;

use expander_lab::duhamel::{synthesize, Provenance, Trajectory};
use expander_lab::error::LabError;
use expander_lab::modes_mz::{
    check_mode_system, fit_decay_rate, mode_trajectory, mz_check, mz_synthesize, Branch, ModeSystemConfig, MzTrajectory,
};

use common::{bump, fixture};

fn grid(s0: f64, s1: f64, step: f64) -> Vec<f64> {
    let n = ((s1 - s0) / step).round() as usize;
    (0..=n).map(|k| s0 + k as f64 * step).collect()
}

/// c(s)φ_k with c = amp·e^{−λ_k s}, the linear solution in one mode.
fn single_mode(k: usize, amp: f64, times: &[f64]) -> Trajectory {
    let f = fixture();
    let l = f.spec.lambdas[k];
    let frames = times
        .iter()
        .map(|s| {
            let mut c = vec![0.0; f.spec.modes()];
            c[k] = amp * (-l * s).exp();
            synthesize(&c, &f.spec)
        })
        .collect();
    Trajectory::new(times.to_vec(), frames, &f.spec, Provenance::Duhamel).unwrap()
}

#[test]
fn single_unstable_mode_is_all_minus() {
    let f = fixture();
    let times = grid(-10.0, 0.0, 0.1);
    let traj = single_mode(0, 1e-3, &times);
    let mt = mode_trajectory(&traj, &f.spec, &f.energy, 0.0).unwrap();
    assert_eq!(mt.mu_below, Some(f.spec.lambdas[0]));
    assert_eq!(mt.mu_above, Some(f.spec.lambdas[1]));
    for k in 0..mt.len() {
        let c = 1e-3 * (-f.spec.lambdas[0] * times[k]).exp();
        assert!((mt.v_minus[k] / c - 1.0).abs() < 1e-8);
        assert!(mt.v_plus[k] <= 1e-8 * c && mt.v_zero[k] == 0.0);
        assert!((mt.v_total[k] / c - 1.0).abs() < 1e-8);
    }
    let rep = check_mode_system(&mt, &ModeSystemConfig::default());
    assert!(rep.pass, "{rep:?}");
    // unit windows from s = -10; the last holds only s = 0
    assert_eq!(rep.windows.len(), 11);
    assert!(rep.max_constants.iter().all(|c| *c < 1e-3), "{:?}", rep.max_constants);

    let fit = fit_decay_rate(&mt).unwrap();
    assert!((fit.exponent + f.spec.lambdas[0]).abs() < 1e-8, "{fit:?}");
    assert!(fit.residual < 1e-8);
}

#[test]
fn static_zero_has_nothing_to_fit() {
    let f = fixture();
    let times = grid(-5.0, 0.0, 0.1);
    let frames = vec![vec![0.0; f.neck.curve.len()]; times.len()];
    let traj = Trajectory::new(times, frames, &f.spec, Provenance::Flow).unwrap();
    let mt = mode_trajectory(&traj, &f.spec, &f.energy, 0.0).unwrap();
    for v in [&mt.v_plus, &mt.v_zero, &mt.v_minus, &mt.v_total, &mt.delta] {
        assert!(v.iter().all(|x| *x == 0.0));
    }
    assert!(check_mode_system(&mt, &ModeSystemConfig::default()).pass);
    assert!(matches!(fit_decay_rate(&mt), Err(LabError::Window(_))));
}

#[test]
fn corrupted_frame_fails_only_its_window() {
    let f = fixture();
    let times = grid(-10.0, 0.0, 0.1);
    let mut traj = single_mode(0, 1e-3, &times);
    let k = 50;
    let c = 1e-3 * (-f.spec.lambdas[0] * times[k]).exp();
    let mut frames = traj.frames.clone();
    for (v, p) in frames[k].iter_mut().zip(&f.spec.phis[2]) {
        *v += 0.5 * c * p;
    }
    traj = Trajectory::new(times.clone(), frames, &f.spec, Provenance::Duhamel).unwrap();
    let mt = mode_trajectory(&traj, &f.spec, &f.energy, 0.0).unwrap();
    let rep = check_mode_system(&mt, &ModeSystemConfig::default());
    assert!(!rep.pass);
    assert!(!rep.failures.is_empty());
    assert!(rep.failures.iter().all(|s| (s - times[k]).abs() <= 1.0 + 1e-9), "{:?}", rep.failures);
}

#[test]
fn mode_magnitudes_respect_bessel() {
    let f = fixture();
    let mid = 0.5 * f.neck.curve.total_length();
    let times = vec![-2.0, -1.0, 0.0];
    let frames: Vec<Vec<f64>> =
        [(mid - 2.0, 1.0), (mid, 3.0), (mid + 4.0, 0.7)].iter().map(|(c, w)| bump(&f.energy, *c, *w)).collect();
    let traj = Trajectory::new(times, frames, &f.spec, Provenance::Flow).unwrap();
    for mu in [-1.0, 0.0, f.spec.lambdas[2]] {
        let mt = mode_trajectory(&traj, &f.spec, &f.energy, mu).unwrap();
        assert!(mt.bessel_excess() <= 1e-12, "mu {mu}: {}", mt.bessel_excess());
    }
}

#[test]
fn mode_trajectory_rejects_wrong_grids() {
    let f = fixture();
    let sheet_energy = expander_lab::graph_energy::GraphEnergy::new(&f.sheet.curve).unwrap();
    let traj = single_mode(0, 1e-3, &[-1.0, 0.0]);
    assert_ne!(sheet_energy.len(), f.energy.len());
    let err = mode_trajectory(&traj, &f.spec, &sheet_energy, 0.0).unwrap_err();
    assert!(matches!(err, LabError::GridMismatch { .. }));
}

fn mz(times: &[f64], x: impl Fn(f64) -> f64, y: impl Fn(f64) -> f64, z: impl Fn(f64) -> f64, eps: f64) -> MzTrajectory {
    MzTrajectory::new(
        times.to_vec(),
        times.iter().map(|s| x(*s)).collect(),
        times.iter().map(|s| y(*s)).collect(),
        times.iter().map(|s| z(*s)).collect(),
        eps,
    )
    .unwrap()
}

#[test]
fn constant_x_takes_the_first_branch() {
    let times = grid(-10.0, 0.0, 0.05);
    let v = mz_check(&mz(&times, |_| 1.0, |_| 0.0, |_| 0.0, 0.05));
    assert!(v.hypotheses_ok && v.violations.is_empty());
    assert_eq!(v.y_bound_ok, Some(true));
    assert_eq!(v.branch, Branch::First { s_star: 0.0 });
}

#[test]
fn growing_z_takes_the_second_branch() {
    let times = grid(-10.0, 0.0, 0.05);
    let v = mz_check(&mz(&times, |_| 0.0, |_| 0.0, f64::exp, 0.05));
    assert!(v.hypotheses_ok, "{v:?}");
    assert_eq!(v.branch, Branch::Second { c: 0.0 });
}

#[test]
fn persistent_y_fails_the_hypotheses() {
    let times = grid(-10.0, 0.0, 0.05);
    let v = mz_check(&mz(&times, |_| 1.0, |_| 1.0, |_| 0.0, 0.05));
    assert!(!v.hypotheses_ok && !v.liminf_ok);
    assert_eq!(v.violations.len(), times.len() - 1);
    assert_eq!((v.branch, v.y_bound_ok, v.y_ratio), (Branch::None, None, None));
}

#[test]
fn mz_input_validation() {
    let ok = |t: Vec<f64>, x: Vec<f64>| MzTrajectory::new(t, x.clone(), vec![0.0; x.len()], vec![0.0; x.len()], 0.1);
    assert!(ok(vec![-1.0, 0.0], vec![1.0, 1.0]).is_ok());
    assert!(ok(vec![0.0, -1.0], vec![1.0, 1.0]).is_err());
    assert!(ok(vec![-1.0, 1.0], vec![1.0, 1.0]).is_err());
    assert!(ok(vec![-1.0, 0.0], vec![1.0, -1.0]).is_err());
    assert!(ok(vec![-1.0, 0.0], vec![1.0, 0.0]).is_err());
    assert!(ok(vec![0.0], vec![1.0]).is_err());
    assert!(MzTrajectory::new(vec![-1.0, 0.0], vec![1.0; 2], vec![0.0; 2], vec![0.0; 2], 0.0).is_err());
    assert!(mz_synthesize(0, 1.5, -1.0).is_err());
    assert!(mz_synthesize(0, 0.1, 0.0).is_err());
}

#[test]
fn synthesized_data_is_reproducible() {
    let a = mz_synthesize(42, 0.02, -8.0).unwrap();
    let b = mz_synthesize(42, 0.02, -8.0).unwrap();
    assert_eq!((a.x.clone(), a.y.clone(), a.z.clone()), (b.x, b.y, b.z));
    assert_eq!(a.times[0], -8.0);
    assert_eq!(*a.times.last().unwrap(), 0.0);
    let v = mz_check(&a);
    assert!(v.hypotheses_ok, "{v:?}");
}

//! Relative expander entropy of normal graphs and the inequalities around it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::duhamel::{synthesize, Trajectory};
use crate::error::{LabError, Result};
use crate::geometry::EndKind;
use crate::graph_energy::GraphEnergy;
use crate::numeric::{uniform_derivative, Parity};
use crate::spectral::SpectralData;

/// Smooth cutoff: 1 on [0, r], 0 beyond r + 1, C^∞ in between.
pub fn smooth_cutoff(x: f64, r: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = x - r;
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        f(1.0 - t) / (f(1.0 - t) + f(t))
    }
}

fn cut(energy: &GraphEnergy, v: &[f64], r: f64) -> Vec<f64> {
    let base = energy.base();
    v.iter().enumerate().map(|(j, x)| x * smooth_cutoff(base.radius(j), r)).collect()
}

/// Largest cutoff radius allowed on this base.
pub fn max_cutoff(energy: &GraphEnergy) -> f64 {
    energy.base().max_radius() - 4.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CutoffEntropy {
    pub value: f64,
    pub r_cut: f64,
    /// E*(χ_R v) − E*(χ_{R−2} v).
    pub change: f64,
}

fn cutoff_entropy(energy: &GraphEnergy, v: &[f64], r_cut: f64) -> Result<CutoffEntropy> {
    if r_cut > max_cutoff(energy) + 1e-12 || r_cut <= 2.0 {
        return Err(LabError::InvalidInput(format!("cutoff radius {r_cut} must lie in (2, {}]", max_cutoff(energy))));
    }
    let value = energy.energy(&cut(energy, v, r_cut))?;
    let inner = energy.energy(&cut(energy, v, r_cut - 2.0))?;
    Ok(CutoffEntropy { value, r_cut, change: value - inner })
}

/// E*_rel of the graph of χ_R v. Fails when moving the cutoff in by 2
/// changes the value by more than 1e−3 of itself.
pub fn relative_entropy(energy: &GraphEnergy, v: &[f64], r_cut: f64) -> Result<CutoffEntropy> {
    let e = cutoff_entropy(energy, v, r_cut)?;
    if e.change.abs() > 1e-3 * e.value.abs() {
        return Err(LabError::Hypothesis(format!(
            "cutoff entropy not converged: change {:e} against value {:e}",
            e.change, e.value
        )));
    }
    Ok(e)
}

/// The Euler–Lagrange operator: W-gradient of E* at v.
pub fn gradient_n(energy: &GraphEnergy, v: &[f64]) -> Result<Vec<f64>> {
    energy.gradient(v)
}

/// max |N(v) + m(v)(L v + Q(v))|: the gradient, the flow velocity and the
/// linear/nonlinear split all come from one code path.
pub fn gradient_identity_defect(energy: &GraphEnergy, v: &[f64]) -> Result<f64> {
    let n = energy.gradient(v)?;
    let m = energy.metric(v)?;
    let lv = energy.apply_linear(v);
    let q = crate::ancient::evaluate_q(energy, v)?;
    Ok((0..v.len()).map(|j| (n[j] + m[j] * (lv[j] + q[j])).abs()).fold(0.0, f64::max))
}

/// max over active nodes of |v|, |v′|, |v″| in arc length.
pub fn c2_proxy(energy: &GraphEnergy, v: &[f64]) -> f64 {
    let base = energy.base();
    let parity = (base.start == EndKind::Axis).then_some(Parity::Even);
    let d1 = uniform_derivative(v, base.spacing, 1, parity);
    let d2 = uniform_derivative(v, base.spacing, 2, parity);
    energy.active().map(|j| v[j].abs().max(d1[j].abs()).max(d2[j].abs())).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyReport {
    pub e_star: f64,
    pub e_quadratic: f64,
    pub expansion_gap: f64,
    pub grad_norm: f64,
    pub lojasiewicz_ratio: f64,
    pub r_cut: f64,
    pub norm_w: f64,
    pub norm_w1: f64,
    pub c2_proxy: f64,
    /// gap / (C²-proxy · ‖v‖²_{W¹}).
    pub c_gap: f64,
    /// |two-form − one-form| / |one-form| for the discrete quadratic form.
    pub form_defect: f64,
    /// Relative gap between the discrete form and the nodal quadrature of
    /// ∫(|∇v|² + (½ − |A|²)v²)w; second order in the spacing.
    pub continuum_form_gap: f64,
}

/// E*, its quadratic prediction −½⟨v, Lv⟩_W and the norms bounding their gap.
pub fn expansion_check(energy: &GraphEnergy, v: &[f64]) -> Result<EntropyReport> {
    let r_cut = max_cutoff(energy);
    let e = relative_entropy(energy, v, r_cut)?;
    let vc = cut(energy, v, r_cut);
    let form = energy.hessian_form(&vc);
    let (g, p) = energy.hessian_form_split(&vc);
    let e_quadratic = 0.5 * form;
    let expansion_gap = (e.value - e_quadratic).abs();
    let grad = energy.gradient(&vc)?;
    let grad_norm = energy.norm(&grad);
    let norm_w = energy.norm(&vc);
    let dir = energy.dirichlet_form(&vc);
    let norm_w1 = (norm_w * norm_w + dir).sqrt();
    let c2 = c2_proxy(energy, &vc);
    let base = energy.base();
    let pot: Vec<f64> = vc.iter().zip(&base.a2).map(|(x, a)| (0.5 - a) * x).collect();
    let continuum = dir + energy.inner(&vc, &pot);
    let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { (a - b).abs() / b.abs() };
    Ok(EntropyReport {
        e_star: e.value,
        e_quadratic,
        expansion_gap,
        grad_norm,
        lojasiewicz_ratio: if grad_norm > 0.0 { e.value.abs().sqrt() / grad_norm } else { 0.0 },
        r_cut,
        norm_w,
        norm_w1,
        c2_proxy: c2,
        c_gap: if c2 > 0.0 && norm_w1 > 0.0 { expansion_gap / (c2 * norm_w1 * norm_w1) } else { 0.0 },
        form_defect: rel(g + p, form),
        continuum_form_gap: rel(continuum, form),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoincareReport {
    pub e_star: f64,
    pub rhs: f64,
    pub c1: f64,
    pub c2: f64,
    pub pass: bool,
}

/// E* ≥ C₁∫|∇v|²w − C₂∫v²w with C₁ = ¼ and C₂ = max(½, sup|A|²) + ¼.
pub fn reverse_poincare_check(energy: &GraphEnergy, v: &[f64]) -> Result<PoincareReport> {
    let e = relative_entropy(energy, v, max_cutoff(energy))?.value;
    let vc = cut(energy, v, max_cutoff(energy));
    let a2 = energy.base().a2.iter().fold(0.0f64, |m, x| m.max(*x));
    let (c1, c2) = (0.25, a2.max(0.5) + 0.25);
    let n = energy.norm(&vc);
    let rhs = c1 * energy.dirichlet_form(&vc) - c2 * n * n;
    Ok(PoincareReport { e_star: e, rhs, c1, c2, pass: e >= rhs })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LojasiewiczReport {
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Safety-factored spectral-gap constant 2·max(1, |λ|_min^{−1/2})·5.
pub fn lojasiewicz_bound(spec: &SpectralData) -> f64 {
    let lmin = spec.lambdas.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    2.0 * (1.0f64).max(1.0 / lmin.sqrt()) * 5.0
}

fn require_generic(spec: &SpectralData) -> Result<()> {
    if spec.nullity > 0 {
        return Err(LabError::Hypothesis(format!(
            "nullity {} at tol_zero {}: the inequality needs a generic spectrum",
            spec.nullity, spec.tol_zero
        )));
    }
    Ok(())
}

/// |E*|^{1/2} / ‖N(v)‖_W against the spectral-gap bound.
pub fn lojasiewicz_ratio(energy: &GraphEnergy, spec: &SpectralData, v: &[f64]) -> Result<LojasiewiczReport> {
    require_generic(spec)?;
    let e = relative_entropy(energy, v, max_cutoff(energy))?.value;
    let vc = cut(energy, v, max_cutoff(energy));
    let g = energy.norm(&energy.gradient(&vc)?);
    let ratio = if g > 0.0 {
        e.abs().sqrt() / g
    } else if e == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let bound = lojasiewicz_bound(spec);
    Ok(LojasiewiczReport { ratio, bound, pass: ratio <= bound })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LojasiewiczSuite {
    pub seed: u64,
    pub samples: usize,
    pub amplitude: f64,
    pub max_ratio: f64,
    pub max_ratio_half: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Random W-normalised mixtures of the first `modes` eigenfunctions at the
/// given amplitude and at half of it.
pub fn lojasiewicz_suite(
    energy: &GraphEnergy,
    spec: &SpectralData,
    seed: u64,
    samples: usize,
    modes: usize,
    amplitude: f64,
) -> Result<LojasiewiczSuite> {
    require_generic(spec)?;
    let modes = modes.min(spec.modes()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    let mut max_half = 0.0f64;
    for _ in 0..samples {
        let mut c: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        c.iter_mut().for_each(|x| *x *= amplitude / norm);
        let v = synthesize(&c, spec);
        max_ratio = max_ratio.max(lojasiewicz_ratio(energy, spec, &v)?.ratio);
        let h: Vec<f64> = v.iter().map(|x| 0.5 * x).collect();
        max_half = max_half.max(lojasiewicz_ratio(energy, spec, &h)?.ratio);
    }
    let bound = lojasiewicz_bound(spec);
    let stable = (max_ratio - max_half).abs() <= 0.05 * max_ratio.max(max_half);
    Ok(LojasiewiczSuite {
        seed,
        samples,
        amplitude,
        max_ratio,
        max_ratio_half: max_half,
        bound,
        pass: max_ratio.is_finite() && max_ratio <= bound && max_half <= bound && stable,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub dissipation: Vec<f64>,
    /// max over intervals of (E_{k+1} − E_k)/Δs, clipped below at 0.
    pub max_increase_rate: f64,
    /// |E_end − E_start + ∫D ds| / ∫D ds with trapezoidal time quadrature.
    pub identity_error: f64,
    pub max_energy: f64,
    pub nonincreasing: bool,
    pub identity_ok: bool,
}

/// Forward monotonicity of E* along recorded frames (uncut, whole truncated
/// domain) and the dissipation identity dE/ds = −∫|H − x·N/2|² w.
pub fn monotonicity_check(energy: &GraphEnergy, traj: &Trajectory) -> Result<MonotonicityReport> {
    if traj.len() < 3 {
        return Err(LabError::InvalidInput("monotonicity needs at least three frames".into()));
    }
    let energies = traj.frames.iter().map(|f| energy.energy(f)).collect::<Result<Vec<_>>>()?;
    let dissipation = traj.frames.iter().map(|f| energy.dissipation(f)).collect::<Result<Vec<_>>>()?;
    let mut max_rate = 0.0f64;
    let mut integral = 0.0;
    for k in 0..traj.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        max_rate = max_rate.max((energies[k + 1] - energies[k]) / dt);
        integral += 0.5 * dt * (dissipation[k] + dissipation[k + 1]);
    }
    let drop = energies[0] - energies[traj.len() - 1];
    let identity_error = if integral > 0.0 { (drop - integral).abs() / integral } else { drop.abs() };
    Ok(MonotonicityReport {
        times: traj.times.clone(),
        max_energy: energies.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)),
        energies,
        dissipation,
        max_increase_rate: max_rate,
        identity_error,
        nonincreasing: max_rate <= 1e-8,
        identity_ok: identity_error <= 1e-2 || (integral == 0.0 && drop == 0.0),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DefinitionRow {
    pub r: f64,
    pub graph_cutoff: f64,
    pub ball: f64,
    pub gap: f64,
}

/// Ball-cutoff difference of weighted areas against the graph-cutoff E* at each radius.
pub fn compare_entropy_definitions(energy: &GraphEnergy, v: &[f64], radii: &[f64]) -> Result<Vec<DefinitionRow>> {
    radii
        .iter()
        .map(|&r| {
            if r > max_cutoff(energy) + 1e-12 || r <= 0.0 {
                return Err(LabError::InvalidInput(format!("radius {r} outside (0, {}]", max_cutoff(energy))));
            }
            let graph_cutoff = energy.energy(&cut(energy, v, r))?;
            let ball = energy.ball_difference(v, r)?;
            Ok(DefinitionRow { r, graph_cutoff, ball, gap: (ball - graph_cutoff).abs() })
        })
        .collect()
}

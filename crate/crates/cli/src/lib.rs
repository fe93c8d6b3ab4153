//! Command-line front end: argument parsing, path resolution, exit codes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use expander_lab::acceptance;
use expander_lab::ancient::{closeness_check, construct_ancient, AncientParams};
use expander_lab::duhamel::{ModeBasis, Trajectory};
use expander_lab::entropy::{
    compare_entropy_definitions, expansion_check, lojasiewicz_ratio, max_cutoff, monotonicity_check,
    reverse_poincare_check,
};
use expander_lab::error::LabError;
use expander_lab::expander::{find_expanders, sweep_cone_slope, sweep_threshold, SearchGrid, ShootingGrid, Topology};
use expander_lab::flow::{morse_flow_line, unrescale, Flow, FlowConfig, Implicit, MorseConfig};
use expander_lab::geometry::{ConeSpec, ProfileCurve};
use expander_lab::graph_energy::GraphEnergy;
use expander_lab::io;
use expander_lab::modes_mz::{
    check_mode_system, fit_decay_rate, mode_trajectory, mz_check, mz_synthesize, ModeSystemConfig,
};
use expander_lab::spectral::{assemble_stability, eigensolve, SpectralData};

/// Default output directory when neither `--out-dir` nor the config sets one.
pub const OUT_DIR_ENV: &str = "EXPANDER_LAB_OUT";

/// Profiles above this residual are flagged; thin necks need a finer `--spacing`.
const RESOLVED_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lab(#[from] LabError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lab(e) => match e {
                LabError::InvalidInput(_)
                | LabError::Io(_)
                | LabError::Csv(_)
                | LabError::Json(_)
                | LabError::GridMismatch { .. } => 1,
                _ => 2,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Lab(e) => match e {
                LabError::InvalidInput(_) => "invalid_input",
                LabError::Degenerate(_) => "degenerate",
                LabError::Inadmissible { .. } => "inadmissible",
                LabError::NotConical(_) => "not_conical",
                LabError::BlowUp { .. } => "blow_up",
                LabError::StepUnderflow { .. } => "step_underflow",
                LabError::Singularity { .. } => "singularity",
                LabError::Topology { .. } => "topology",
                LabError::NoSignChange { .. } => "no_sign_change",
                LabError::EigenNonConvergence(_) => "eigen_non_convergence",
                LabError::StableBase => "stable_base",
                LabError::NoContraction { .. } => "no_contraction",
                LabError::Hypothesis(_) => "hypothesis",
                LabError::GridMismatch { .. } => "grid_mismatch",
                LabError::Window(_) => "window",
                LabError::Io(_) => "io",
                LabError::Csv(_) => "csv",
                LabError::Json(_) => "json",
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Optional JSON run configuration; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spacing: Option<f64>,
    pub r_max: Option<f64>,
    pub shoot_tol: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub tol_zero: Option<f64>,
    pub flow_atol: Option<f64>,
    pub flow_rtol: Option<f64>,
    pub ancient_tol: Option<f64>,
}

#[derive(Debug, Parser)]
#[command(name = "expander-lab", version, about = "Self-expanders, their spectra and the rescaled flows leaving them")]
pub struct Cli {
    /// JSON run configuration (unknown keys are rejected).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sweeps and frame loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Arc-length node spacing of shot profiles.
    #[arg(long, global = true)]
    pub spacing: Option<f64>,
    /// Truncation radius of shot profiles.
    #[arg(long, global = true)]
    pub r_max: Option<f64>,
    /// Seed for randomized suites.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expander profiles asymptotic to a double cone.
    #[command(subcommand)]
    Expander(ExpanderCmd),
    /// Eigenpairs of the stability operator.
    Spectrum(SpectrumArgs),
    /// Ancient flows out of an unstable expander.
    #[command(subcommand)]
    Ancient(AncientCmd),
    /// Forward rescaled flow.
    #[command(subcommand)]
    Flow(FlowCmd),
    /// Relative entropy diagnostics.
    #[command(subcommand)]
    Entropy(EntropyCmd),
    /// Mode magnitudes along a trajectory.
    #[command(subcommand)]
    Modes(ModesCmd),
    /// Three-function ODE lemma.
    #[command(subcommand)]
    Mz(MzCmd),
    /// Runs all acceptance criteria and prints the summary table.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Sheet,
    Neck,
}

#[derive(Debug, Subcommand)]
pub enum ExpanderCmd {
    /// Solves for expanders of one kind and writes the chosen profile.
    Match {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        slope: f64,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Which solution of that kind, ordered by parameter.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value = "profile.csv")]
        out: PathBuf,
    },
    /// Counts expanders over a range of slopes and writes bifurcation.csv.
    Sweep {
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// start:end:count
        #[arg(long, default_value = "0.3:0.6:20")]
        slopes: String,
        #[arg(long, default_value = "bifurcation.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub modes: usize,
    #[arg(long)]
    pub tol_zero: Option<f64>,
    /// Path of spec.json; mode files go next to it.
    #[arg(long, default_value = "spec/spec.json")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AncientCmd {
    /// Fixed-point construction from unstable-mode data a.
    Construct {
        #[arg(long)]
        spec: PathBuf,
        /// Comma-separated, one value per unstable mode.
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        s_back: Option<f64>,
        #[arg(long)]
        ds: Option<f64>,
        #[arg(long, default_value = "ancient")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImplicitArg {
    Base,
    Current,
}

#[derive(Debug, Subcommand)]
pub enum FlowCmd {
    /// Evolves an initial graph over the profile (or the spectrum's base profile).
    Run {
        #[arg(long, required_unless_present = "spec")]
        profile: Option<PathBuf>,
        /// mode:K:AMP (needs --spec or computes one), zero, or csv:PATH with a v column.
        #[arg(long, allow_hyphen_values = true)]
        v0: String,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 0.1)]
        record_every: f64,
        #[arg(long, value_enum, default_value_t = ImplicitArg::Base)]
        implicit: ImplicitArg,
        #[arg(long, default_value = "flow")]
        out: PathBuf,
    },
    /// Σ_t = √t Σ_{log t} for the requested t and its distance to the cone.
    Unrescale {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        times: String,
        #[arg(long, default_value = "unrescaled.json")]
        out: PathBuf,
    },
    /// One-sided ancient flow continued forward until it stalls.
    Morse {
        #[arg(long)]
        spec: PathBuf,
        /// + or -
        #[arg(long, default_value = "+", allow_hyphen_values = true)]
        sign: String,
        #[arg(long, default_value_t = 1e-3)]
        amplitude: f64,
        #[arg(long, default_value_t = 120.0)]
        s_max: f64,
        #[arg(long, default_value = "morse")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EntropyCmd {
    /// Expansion, reverse Poincaré and Łojasiewicz checks for one graph.
    Check {
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        v: String,
        #[arg(long, default_value = "entropy_report.json")]
        out: PathBuf,
    },
    /// Monotonicity and the dissipation identity along a trajectory.
    Monotone {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModesCmd {
    Analyze {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu: f64,
        /// Judge the mode system only for s ≤ this value.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        s_max: f64,
        #[arg(long, default_value = "modes.json")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum MzCmd {
    /// Checks hypotheses and conclusions on sampled s, x, y, z.
    Check {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Writes a seeded trajectory that satisfies the hypotheses.
    Synthesize {
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
        s_min: f64,
        #[arg(long, default_value = "xyz.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, default_value = "acceptance.json")]
    pub out: PathBuf,
}

/// Settings after merging flags, config file and environment.
struct Ctx {
    out_dir: PathBuf,
    grid: ShootingGrid,
    seed: u64,
    tol: Tolerances,
}

impl Ctx {
    fn output(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }
}

fn input(p: &Path) -> CliResult<PathBuf> {
    if !p.exists() {
        return Err(CliError::Usage(format!("input not found: {}", p.display())));
    }
    Ok(p.to_path_buf())
}

fn print_json<T: Serialize>(v: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(LabError::from)?);
    Ok(())
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("not a number: {x:?}"))))
        .collect()
}

fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("expected start:end:count, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let k: usize = parts[2].parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(bad());
    }
    if k == 1 {
        return Ok(vec![a]);
    }
    Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect())
}

/// mode:K:AMP, zero, or csv:PATH.
fn parse_graph(desc: &str, len: usize, spec: Option<&SpectralData>) -> CliResult<Vec<f64>> {
    if desc == "zero" {
        return Ok(vec![0.0; len]);
    }
    if let Some(rest) = desc.strip_prefix("mode:") {
        let (k, amp) =
            rest.split_once(':').ok_or_else(|| CliError::Usage(format!("expected mode:K:AMP, got {desc:?}")))?;
        let k: usize = k.parse().map_err(|_| CliError::Usage(format!("bad mode number {k:?}")))?;
        let amp: f64 = amp.parse().map_err(|_| CliError::Usage(format!("bad amplitude {amp:?}")))?;
        let spec = spec.ok_or_else(|| CliError::Usage("mode data needs a spectrum".into()))?;
        if k == 0 || k > spec.modes() {
            return Err(CliError::Usage(format!("mode {k} outside 1..={}", spec.modes())));
        }
        return Ok(spec.phis[k - 1].iter().map(|x| amp * x).collect());
    }
    if let Some(path) = desc.strip_prefix("csv:") {
        let path = input(Path::new(path))?;
        let r = io::read_column(&path, "v")?;
        if r.len() != len {
            return Err(LabError::GridMismatch { expected: len, got: r.len() }.into());
        }
        return Ok(r);
    }
    Err(CliError::Usage(format!("unknown graph description {desc:?}")))
}

fn spectrum_for(curve: &ProfileCurve, modes: usize, tol_zero: Option<f64>) -> CliResult<SpectralData> {
    let spec = eigensolve(&assemble_stability(curve)?, modes)?;
    Ok(match tol_zero {
        Some(t) => spec.with_tol_zero(t),
        None => spec,
    })
}

fn flow_config(ctx: &Ctx, implicit: Implicit) -> FlowConfig {
    let mut c = FlowConfig { implicit, ..FlowConfig::default() };
    if let Some(a) = ctx.tol.flow_atol {
        c.atol = a;
    }
    if let Some(r) = ctx.tol.flow_rtol {
        c.rtol = r;
    }
    c
}

fn cmd_expander(ctx: &Ctx, cmd: ExpanderCmd) -> CliResult<()> {
    match cmd {
        ExpanderCmd::Match { n, slope, kind, index, out } => {
            let cone = ConeSpec::new(n, slope)?;
            let want = match kind {
                Kind::Sheet => Topology::Sheet,
                Kind::Neck => Topology::Neck,
            };
            let all = find_expanders(&cone, &ctx.grid, &SearchGrid::default())?;
            let mut chosen: Vec<_> = all.into_iter().filter(|e| e.topology == want).collect();
            chosen.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
            let found: Vec<_> = chosen
                .iter()
                .map(|e| {
                    json!({
                        "parameter": e.parameter,
                        "residual_norm": e.residual_norm,
                        "resolved": e.residual_norm < RESOLVED_RESIDUAL,
                        "nodes": e.curve.len(),
                    })
                })
                .collect();
            let Some(e) = chosen.get(index) else {
                return Err(LabError::Hypothesis(format!(
                    "{} {kind:?} solution(s) for slope {slope}, index {index} requested",
                    chosen.len()
                ))
                .into());
            };
            let path = ctx.output(&out);
            io::write_expander(&path, e)?;
            print_json(&json!({"cone": cone, "kind": want, "found": found, "index": index, "profile": path}))
        }
        ExpanderCmd::Sweep { n, slopes, out } => {
            let slopes = parse_range(&slopes)?;
            let rows = sweep_cone_slope(&slopes, n, &ctx.grid, &SearchGrid::default());
            let path = ctx.output(&out);
            io::write_bifurcation(&path, &rows)?;
            print_json(&json!({"rows": rows.len(), "threshold": sweep_threshold(&rows), "csv": path}))
        }
    }
}

fn cmd_spectrum(ctx: &Ctx, a: SpectrumArgs) -> CliResult<()> {
    let (curve, header) = io::read_profile(&input(&a.profile)?)?;
    let spec = spectrum_for(&curve, a.modes, a.tol_zero.or(ctx.tol.tol_zero))?;
    let out = ctx.output(&a.out);
    let dir = if out.extension().is_some_and(|e| e == "json") {
        out.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        out.clone()
    };
    io::write_spectrum(&dir, &spec, &curve, &header)?;
    if out.extension().is_some_and(|e| e == "json") && out.file_name() != Some("spec.json".as_ref()) {
        std::fs::rename(dir.join("spec.json"), &out).map_err(LabError::from)?;
    }
    print_json(&json!({
        "lambdas": spec.lambdas, "I": spec.index, "K": spec.nullity,
        "ambiguous": spec.ambiguous, "dir": dir,
    }))
}

fn cmd_ancient(ctx: &Ctx, cmd: AncientCmd) -> CliResult<()> {
    let AncientCmd::Construct { spec, a, delta0, s_back, ds, out } = cmd;
    let (spec, curve, header) = io::read_spectrum(&input(&spec)?)?;
    let energy = GraphEnergy::new(&curve)?;
    let mut params = AncientParams::new(&spec, parse_list(&a)?)?;
    if let Some(d) = delta0 {
        params.delta0 = d;
    }
    params.s_back = s_back;
    if let Some(d) = ds {
        params.ds = d;
    }
    if let Some(t) = ctx.tol.ancient_tol {
        params.tol = t;
    }
    params.validate(&spec)?;
    let run = construct_ancient(&energy, &spec, &params)?;
    let close = closeness_check(&run.trajectory, &spec, &params)?;
    let dir = ctx.output(&out);
    io::write_trajectory(&dir, &run.trajectory, &curve, &header)?;
    let report = json!({
        "beta_empirical": close.beta_empirical,
        "beta_target": params.beta,
        "within_target": close.within_target,
        "worst_time": close.worst_time,
        "delta0": run.delta0,
        "s_back": run.s_back,
        "iterations": run.iterations,
        "increments": run.increments,
        "contraction": run.contraction,
        "frames": run.trajectory.len(),
    });
    io::write_json(&dir.join("closeness.json"), &report)?;
    print_json(&report)
}

fn cmd_flow(ctx: &Ctx, cmd: FlowCmd) -> CliResult<()> {
    match cmd {
        FlowCmd::Run { profile, v0, spec, from, to, record_every, implicit, out } => {
            let loaded = spec.map(|p| input(&p).and_then(|p| Ok(io::read_spectrum(&p)?))).transpose()?;
            let (curve, header) = match &profile {
                Some(p) => io::read_profile(&input(p)?)?,
                None => {
                    let (_, c, h) = loaded.as_ref().expect("clap requires --profile or --spec");
                    (c.clone(), h.clone())
                }
            };
            let energy = GraphEnergy::new(&curve)?;
            let spec = match loaded {
                Some((s, c, _)) => {
                    if c.len() != curve.len() {
                        return Err(LabError::GridMismatch { expected: curve.len(), got: c.len() }.into());
                    }
                    s
                }
                None => spectrum_for(&curve, 12, ctx.tol.tol_zero)?,
            };
            let v = energy.pin(&parse_graph(&v0, curve.len(), Some(&spec))?);
            let implicit = match implicit {
                ImplicitArg::Base => Implicit::Base,
                ImplicitArg::Current => Implicit::Current,
            };
            let flow = Flow::new(&energy, flow_config(ctx, implicit))?;
            let st = flow.initial_state(v, from)?;
            let (traj, end) = flow.evolve(st, to, record_every, Some(&spec))?;
            let mono = monotonicity_check(&energy, &traj).ok();
            let dir = ctx.output(&out);
            io::write_trajectory(&dir, &traj, &curve, &header)?;
            let report = json!({
                "frames": traj.len(),
                "s_end": end.s,
                "accepted_steps": end.accepted,
                "rejected_steps": end.rejected,
                "monotone": mono.as_ref().map(|m| m.nonincreasing),
                "max_increase_rate": mono.as_ref().map(|m| m.max_increase_rate),
                "identity_error": mono.as_ref().map(|m| m.identity_error),
            });
            io::write_json(&dir.join("flow.json"), &report)?;
            print_json(&report)
        }
        FlowCmd::Unrescale { traj, times, out } => {
            let (traj, curve, header) = io::read_trajectory(&input(&traj)?)?;
            let cone = header.cone.ok_or_else(|| CliError::Usage("trajectory profile carries no cone".into()))?;
            let u = unrescale(&traj, &curve, &cone, &parse_list(&times)?)?;
            let path = ctx.output(&out);
            io::write_json(&path, &u)?;
            let summary: Vec<_> =
                u.frames.iter().map(|f| json!({"t": f.t, "s": f.s, "cone_distance": f.cone_distance})).collect();
            print_json(&json!({"frames": summary, "out": path}))
        }
        FlowCmd::Morse { spec, sign, amplitude, s_max, out } => {
            let (spec, curve, header) = io::read_spectrum(&input(&spec)?)?;
            let base = io::expander_from(curve, header.clone(), Path::new("spec profile"))?;
            let energy = GraphEnergy::new(&base.curve)?;
            let sign = match sign.as_str() {
                "+" | "1" | "+1" => 1.0,
                "-" | "-1" => -1.0,
                other => return Err(CliError::Usage(format!("sign must be + or -, got {other:?}"))),
            };
            let mut cfg = MorseConfig { sign, amplitude, s_max, ..MorseConfig::default() };
            if let Some(a) = ctx.tol.flow_atol {
                cfg.flow.atol = a;
            }
            let run = morse_flow_line(&base, &energy, &spec, &cfg)?;
            let dir = ctx.output(&out);
            io::write_trajectory(&dir.join("ancient"), &run.ancient, &base.curve, &header)?;
            io::write_trajectory(&dir.join("forward"), &run.forward, &base.curve, &header)?;
            let report = json!({"outcome": run.outcome, "one_sided": run.one_sided, "frames": run.forward.len()});
            io::write_json(&dir.join("morse.json"), &report)?;
            print_json(&report)
        }
    }
}

fn cmd_entropy(ctx: &Ctx, cmd: EntropyCmd) -> CliResult<()> {
    match cmd {
        EntropyCmd::Check { profile, spec, v, out } => {
            let (spec, mut curve, _) = io::read_spectrum(&input(&spec)?)?;
            if let Some(p) = profile {
                let (c, _) = io::read_profile(&input(&p)?)?;
                if c.len() != curve.len() {
                    return Err(LabError::GridMismatch { expected: curve.len(), got: c.len() }.into());
                }
                curve = c;
            }
            let energy = GraphEnergy::new(&curve)?;
            let v = energy.pin(&parse_graph(&v, curve.len(), Some(&spec))?);
            let expansion = expansion_check(&energy, &v)?;
            let poincare = reverse_poincare_check(&energy, &v)?;
            let loj = if spec.is_generic() { Some(lojasiewicz_ratio(&energy, &spec, &v)?) } else { None };
            let top = max_cutoff(&energy).floor();
            let radii: Vec<f64> = [4.0, 6.0, 8.0, 10.0, 14.0].into_iter().filter(|r| *r <= top).chain([top]).collect();
            let defs = compare_entropy_definitions(&energy, &v, &radii)?;
            let report =
                json!({"expansion": expansion, "reverse_poincare": poincare, "lojasiewicz": loj, "definitions": defs});
            io::write_json(&ctx.output(&out), &report)?;
            print_json(&report)
        }
        EntropyCmd::Monotone { traj, out } => {
            let (traj, curve, _) = io::read_trajectory(&input(&traj)?)?;
            let energy = GraphEnergy::new(&curve)?;
            let m = monotonicity_check(&energy, &traj)?;
            if let Some(o) = out {
                io::write_json(&ctx.output(&o), &m)?;
            }
            print_json(&json!({
                "nonincreasing": m.nonincreasing,
                "identity_ok": m.identity_ok,
                "max_increase_rate": m.max_increase_rate,
                "identity_error": m.identity_error,
                "max_energy": m.max_energy,
            }))
        }
    }
}

fn recompute_coeffs(traj: &mut Trajectory, spec: &SpectralData) -> CliResult<()> {
    if traj.coeffs.iter().any(|c| c.len() != spec.modes()) {
        let basis = ModeBasis::new(spec);
        traj.coeffs = traj.frames.iter().map(|f| basis.coefficients(f)).collect::<Result<_, _>>()?;
    }
    Ok(())
}

fn cmd_modes(ctx: &Ctx, cmd: ModesCmd) -> CliResult<()> {
    let ModesCmd::Analyze { traj, spec, mu, s_max, out } = cmd;
    let (mut traj, _, _) = io::read_trajectory(&input(&traj)?)?;
    let (spec, curve, _) = io::read_spectrum(&input(&spec)?)?;
    recompute_coeffs(&mut traj, &spec)?;
    let energy = GraphEnergy::new(&curve)?;
    let mt = mode_trajectory(&traj, &spec, &energy, mu)?;
    let system = check_mode_system(&mt, &ModeSystemConfig { s_max, ..Default::default() });
    let fit = fit_decay_rate(&mt);
    let report = json!({
        "modes": mt,
        "bessel_excess": mt.bessel_excess(),
        "system": system,
        "decay_fit": fit.as_ref().ok(),
        "decay_fit_error": fit.as_ref().err().map(|e| e.to_string()),
    });
    io::write_json(&ctx.output(&out), &report)?;
    print_json(&json!({
        "bessel_excess": mt.bessel_excess(),
        "system_pass": system.pass,
        "max_constants": system.max_constants,
        "decay_fit": fit.as_ref().ok(),
    }))
}

fn cmd_mz(ctx: &Ctx, cmd: MzCmd) -> CliResult<()> {
    match cmd {
        MzCmd::Check { csv, eps } => {
            let t = io::read_mz(&input(&csv)?, eps)?;
            print_json(&mz_check(&t))
        }
        MzCmd::Synthesize { eps, s_min, out } => {
            let t = mz_synthesize(ctx.seed, eps, s_min)?;
            let path = ctx.output(&out);
            io::write_mz(&path, &t)?;
            print_json(&json!({"samples": t.len(), "seed": ctx.seed, "out": path}))
        }
    }
}

fn cmd_reproduce(ctx: &Ctx, a: ReproduceArgs) -> CliResult<bool> {
    let results = acceptance::run_all(&ctx.grid, |r| eprintln!("{r}"));
    let failed = results.iter().filter(|r| !r.pass).count();
    let path = ctx.output(&a.out);
    // wall time stays in the table so the JSON is identical across runs
    let mut doc = serde_json::to_value(&results).map_err(LabError::from)?;
    if let Some(rows) = doc.as_array_mut() {
        for row in rows {
            if let Some(obj) = row.as_object_mut() {
                obj.remove("seconds");
            }
        }
    }
    io::write_json(&path, &doc)?;
    println!("| id | criterion | result | seconds |");
    println!("|---|---|---|---|");
    for r in &results {
        println!("| {} | {} | {} | {:.2} |", r.id, r.name, if r.pass { "PASS" } else { "FAIL" }, r.seconds);
    }
    println!("{} passed, {failed} failed; details in {}", results.len() - failed, path.display());
    Ok(failed == 0)
}

fn context(cli: &Cli) -> CliResult<Ctx> {
    let cfg: RunConfig = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(input(p)?).map_err(LabError::from)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let threads = cli.threads.or(cfg.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or(cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut grid = ShootingGrid::default();
    if let Some(h) = cli.spacing.or(cfg.spacing) {
        grid.spacing = h;
    }
    if let Some(r) = cli.r_max.or(cfg.r_max) {
        grid.r_max = r;
    }
    if let Some(t) = cfg.shoot_tol {
        grid.tol = t;
    }
    if !(grid.spacing > 0.0 && grid.r_max > 0.0 && grid.tol > 0.0) {
        return Err(CliError::Usage("spacing, r_max and shoot_tol must be positive".into()));
    }
    Ok(Ctx { out_dir, grid, seed: cli.seed.or(cfg.seed).unwrap_or(0), tol: cfg.tolerances })
}

fn dispatch(cli: Cli) -> CliResult<bool> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Expander(c) => cmd_expander(&ctx, c)?,
        Command::Spectrum(a) => cmd_spectrum(&ctx, a)?,
        Command::Ancient(c) => cmd_ancient(&ctx, c)?,
        Command::Flow(c) => cmd_flow(&ctx, c)?,
        Command::Entropy(c) => cmd_entropy(&ctx, c)?,
        Command::Modes(c) => cmd_modes(&ctx, c)?,
        Command::Mz(c) => cmd_mz(&ctx, c)?,
        Command::Reproduce(a) => return cmd_reproduce(&ctx, a),
    }
    Ok(true)
}

/// Exit code of one invocation: 0 success, 1 usage error, 2 numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return 0;
            }
            let msg = e.kind().as_str().unwrap_or("invalid arguments");
            eprintln!("{}", json!({"error": "usage", "message": msg, "exit_code": 1}));
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string(), "exit_code": code}));
            code
        }
    }
}

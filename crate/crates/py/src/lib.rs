//! Python bindings over the core library. Reports come back as plain dicts.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use expander_lab::ancient::{closeness_check, construct_ancient, AncientParams};
use expander_lab::duhamel;
use expander_lab::entropy::{max_cutoff, monotonicity_check, relative_entropy};
use expander_lab::expander::{find_expanders as find_all, ExpanderProfile, SearchGrid, ShootingGrid};
use expander_lab::flow::{Flow, FlowConfig};
use expander_lab::geometry::{ConeSpec, ProfileCurve};
use expander_lab::graph_energy::GraphEnergy;
use expander_lab::io::{self, ProfileHeader};
use expander_lab::modes_mz::{mz_check as check_xyz, mz_synthesize as synth_xyz, MzTrajectory};
use expander_lab::spectral::{assemble_stability, eigensolve, SpectralData};
use expander_lab::LabError;

create_exception!(expander_lab_py, NumericalError, PyException);

fn py_err(e: LabError) -> PyErr {
    match e {
        LabError::InvalidInput(_)
        | LabError::Io(_)
        | LabError::Csv(_)
        | LabError::Json(_)
        | LabError::GridMismatch { .. } => PyValueError::new_err(e.to_string()),
        other => NumericalError::new_err(other.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A profile curve, optionally known to be an expander.
#[pyclass(module = "expander_lab_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Profile {
    curve: ProfileCurve,
    header: ProfileHeader,
    expander: Option<ExpanderProfile>,
}

impl Profile {
    fn from_expander(e: ExpanderProfile) -> Self {
        Profile { curve: e.curve.clone(), header: ProfileHeader::for_expander(&e), expander: Some(e) }
    }
}

#[pymethods]
impl Profile {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (curve, header) = io::read_profile(&path).map_err(py_err)?;
        let expander = io::expander_from(curve.clone(), header.clone(), &path).ok();
        Ok(Profile { curve, header, expander })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_profile(&path, &self.curve, &self.header).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.curve.n
    }

    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.curve.sigma.clone()
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.curve.p.clone()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.curve.q.clone()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.curve.theta.clone()
    }

    #[getter]
    fn mean_curvature(&self) -> Vec<f64> {
        self.curve.mean_curvature.clone()
    }

    /// "sheet" or "neck"; None for curves not read as expanders.
    #[getter]
    fn topology(&self) -> Option<String> {
        self.expander.as_ref().map(|e| format!("{:?}", e.topology).to_lowercase())
    }

    #[getter]
    fn parameter(&self) -> Option<f64> {
        self.expander.as_ref().map(|e| e.parameter)
    }

    #[getter]
    fn residual_norm(&self) -> Option<f64> {
        self.expander.as_ref().map(|e| e.residual_norm)
    }

    fn __len__(&self) -> usize {
        self.curve.len()
    }

    fn __repr__(&self) -> String {
        match &self.expander {
            Some(e) => format!("Profile({:?}, parameter={}, nodes={})", e.topology, e.parameter, self.curve.len()),
            None => format!("Profile(nodes={})", self.curve.len()),
        }
    }
}

/// Eigenpairs of the stability operator together with the profile they belong to.
#[pyclass(module = "expander_lab_py", frozen)]
struct Spectrum {
    spec: SpectralData,
    profile: Profile,
}

#[pymethods]
impl Spectrum {
    #[staticmethod]
    #[pyo3(signature = (profile, modes = 12))]
    fn compute(profile: &Profile, modes: usize) -> PyResult<Self> {
        let op = assemble_stability(&profile.curve).map_err(py_err)?;
        let spec = eigensolve(&op, modes).map_err(py_err)?;
        Ok(Spectrum { spec, profile: profile.clone() })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (spec, curve, header) = io::read_spectrum(&path).map_err(py_err)?;
        let expander = io::expander_from(curve.clone(), header.clone(), &path).ok();
        Ok(Spectrum { spec, profile: Profile { curve, header, expander } })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        io::write_spectrum(&dir, &self.spec, &self.profile.curve, &self.profile.header).map_err(py_err)
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.spec.lambdas.clone()
    }

    #[getter]
    fn index(&self) -> usize {
        self.spec.index
    }

    #[getter]
    fn nullity(&self) -> usize {
        self.spec.nullity
    }

    #[getter]
    fn profile(&self) -> Profile {
        self.profile.clone()
    }

    /// Eigenfunction k, counted from 1.
    fn mode(&self, k: usize) -> PyResult<Vec<f64>> {
        if k == 0 || k > self.spec.modes() {
            return Err(PyValueError::new_err(format!("mode {k} outside 1..={}", self.spec.modes())));
        }
        Ok(self.spec.phis[k - 1].clone())
    }

    fn __repr__(&self) -> String {
        format!("Spectrum(I={}, K={}, modes={})", self.spec.index, self.spec.nullity, self.spec.modes())
    }
}

#[pyclass(module = "expander_lab_py", frozen)]
struct Trajectory {
    traj: duhamel::Trajectory,
    profile: Profile,
}

#[pymethods]
impl Trajectory {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (traj, curve, header) = io::read_trajectory(&path).map_err(py_err)?;
        Ok(Trajectory { traj, profile: Profile { curve, header, expander: None } })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        io::write_trajectory(&dir, &self.traj, &self.profile.curve, &self.profile.header).map_err(py_err)
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.traj.times.clone()
    }

    #[getter]
    fn frames(&self) -> Vec<Vec<f64>> {
        self.traj.frames.clone()
    }

    #[getter]
    fn coeffs(&self) -> Vec<Vec<f64>> {
        self.traj.coeffs.clone()
    }

    /// Entropy decay and the dissipation identity along the recorded frames.
    fn monotonicity<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let energy = GraphEnergy::new(&self.profile.curve).map_err(py_err)?;
        to_dict(py, &monotonicity_check(&energy, &self.traj).map_err(py_err)?)
    }

    fn __len__(&self) -> usize {
        self.traj.len()
    }
}

/// All expanders of the double cone with the given slope.
#[pyfunction]
#[pyo3(signature = (n, slope, spacing = None, r_max = None))]
fn find_expanders(n: usize, slope: f64, spacing: Option<f64>, r_max: Option<f64>) -> PyResult<Vec<Profile>> {
    let cone = ConeSpec::new(n, slope).map_err(py_err)?;
    let mut grid = ShootingGrid::default();
    if let Some(h) = spacing {
        grid.spacing = h;
    }
    if let Some(r) = r_max {
        grid.r_max = r;
    }
    let found = find_all(&cone, &grid, &SearchGrid::default()).map_err(py_err)?;
    Ok(found.into_iter().map(Profile::from_expander).collect())
}

/// Ancient flow with unstable data `a`; returns the trajectory and a closeness report.
#[pyfunction]
#[pyo3(signature = (spectrum, a, delta0 = None, s_back = None))]
fn construct_ancient_flow<'py>(
    py: Python<'py>,
    spectrum: &Spectrum,
    a: Vec<f64>,
    delta0: Option<f64>,
    s_back: Option<f64>,
) -> PyResult<(Trajectory, Bound<'py, PyAny>)> {
    let spec = &spectrum.spec;
    let energy = GraphEnergy::new(&spectrum.profile.curve).map_err(py_err)?;
    let mut params = AncientParams::new(spec, a).map_err(py_err)?;
    if let Some(d) = delta0 {
        params.delta0 = d;
    }
    params.s_back = s_back;
    params.validate(spec).map_err(py_err)?;
    let run = construct_ancient(&energy, spec, &params).map_err(py_err)?;
    let close = closeness_check(&run.trajectory, spec, &params).map_err(py_err)?;
    let report = serde_json::json!({
        "iterations": run.iterations,
        "contraction": run.contraction,
        "s_back": run.s_back,
        "delta0": run.delta0,
        "closeness": close,
    });
    Ok((Trajectory { traj: run.trajectory, profile: spectrum.profile.clone() }, to_dict(py, &report)?))
}

/// Rescaled flow from graph `v0` over the spectrum's profile.
#[pyfunction]
#[pyo3(signature = (spectrum, v0, s_end, s_start = 0.0, record_every = 0.1))]
fn flow_run(spectrum: &Spectrum, v0: Vec<f64>, s_end: f64, s_start: f64, record_every: f64) -> PyResult<Trajectory> {
    let energy = GraphEnergy::new(&spectrum.profile.curve).map_err(py_err)?;
    if v0.len() != spectrum.profile.curve.len() {
        return Err(py_err(LabError::GridMismatch { expected: spectrum.profile.curve.len(), got: v0.len() }));
    }
    let flow = Flow::new(&energy, FlowConfig::default()).map_err(py_err)?;
    let st = flow.initial_state(v0, s_start).map_err(py_err)?;
    let (traj, _) = flow.evolve(st, s_end, record_every, Some(&spectrum.spec)).map_err(py_err)?;
    Ok(Trajectory { traj, profile: spectrum.profile.clone() })
}

/// Relative entropy of graph `v` at the largest admissible cutoff.
#[pyfunction]
fn entropy(spectrum: &Spectrum, v: Vec<f64>) -> PyResult<f64> {
    let energy = GraphEnergy::new(&spectrum.profile.curve).map_err(py_err)?;
    if v.len() != spectrum.profile.curve.len() {
        return Err(py_err(LabError::GridMismatch { expected: spectrum.profile.curve.len(), got: v.len() }));
    }
    let r = max_cutoff(&energy);
    Ok(relative_entropy(&energy, &energy.pin(&v), r).map_err(py_err)?.value)
}

#[pyfunction]
fn mz_check<'py>(
    py: Python<'py>,
    s: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    eps: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = MzTrajectory::new(s, x, y, z, eps).map_err(py_err)?;
    to_dict(py, &check_xyz(&t))
}

/// Seeded (s, x, y, z) samples satisfying the lemma's hypotheses.
#[pyfunction]
#[pyo3(signature = (seed, eps = 0.01, s_min = -20.0))]
fn mz_synthesize<'py>(py: Python<'py>, seed: u64, eps: f64, s_min: f64) -> PyResult<Bound<'py, PyAny>> {
    let t = synth_xyz(seed, eps, s_min).map_err(py_err)?;
    to_dict(py, &t)
}

#[pymodule]
fn expander_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<Profile>()?;
    m.add_class::<Spectrum>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(find_expanders, m)?)?;
    m.add_function(wrap_pyfunction!(construct_ancient_flow, m)?)?;
    m.add_function(wrap_pyfunction!(flow_run, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mz_check, m)?)?;
    m.add_function(wrap_pyfunction!(mz_synthesize, m)?)?;
    Ok(())
}

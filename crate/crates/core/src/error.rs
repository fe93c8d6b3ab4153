use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("graph not admissible at node {node}: {reason}")]
    Inadmissible { node: usize, reason: String },
    #[error("end is not asymptotically conical: {0}")]
    NotConical(String),
    #[error("profile blew up before the truncation radius (escape radius {radius})")]
    BlowUp { radius: f64 },
    #[error("step size underflow at t = {at} ({detail})")]
    StepUnderflow { at: f64, detail: String },
    #[error("singularity proxy at s = {at}: curvature {curvature} exceeds {limit}")]
    Singularity { at: f64, curvature: f64, limit: f64 },
    #[error("topology failure: profile returns to the axis near sigma = {sigma} (p = {p})")]
    Topology { sigma: f64, p: f64 },
    #[error("no sign change on bracket [{lo}, {hi}]: scanned slope range [{slope_min}, {slope_max}]")]
    NoSignChange { lo: f64, hi: f64, slope_min: f64, slope_max: f64 },
    #[error("inverse iteration did not converge for mode {0}")]
    EigenNonConvergence(usize),
    #[error("operation needs an unstable base (index is zero)")]
    StableBase,
    #[error("no contraction after {iterations} iterations (last factor {factor})")]
    NoContraction { iterations: usize, factor: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("fit window too small: {0}")]
    Window(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

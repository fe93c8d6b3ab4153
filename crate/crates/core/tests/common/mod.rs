#![allow(dead_code)]

use std::sync::OnceLock;

use expander_lab::expander::{find_expanders, ExpanderProfile, SearchGrid, ShootingGrid, Topology};
use expander_lab::geometry::ConeSpec;
use expander_lab::graph_energy::GraphEnergy;
use expander_lab::spectral::{assemble_stability, eigensolve, SpectralData};

pub const SLOPE: f64 = 0.43;

/// Inner (unstable) neck, outer neck and sheet of the slope-0.43 cone.
pub struct Fixture {
    pub neck: ExpanderProfile,
    pub outer_neck: ExpanderProfile,
    pub sheet: ExpanderProfile,
    pub spec: SpectralData,
    pub energy: GraphEnergy,
}

pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let cone = ConeSpec::new(2, SLOPE).unwrap();
        let all = find_expanders(&cone, &ShootingGrid::default(), &SearchGrid::default()).unwrap();
        let mut necks: Vec<_> = all.iter().filter(|e| e.topology == Topology::Neck).cloned().collect();
        necks.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
        let sheet = all.iter().find(|e| e.topology == Topology::Sheet).unwrap().clone();
        let neck = necks[0].clone();
        let spec = eigensolve(&assemble_stability(&neck.curve).unwrap(), 12).unwrap();
        let energy = GraphEnergy::new(&neck.curve).unwrap();
        Fixture { neck, outer_neck: necks[1].clone(), sheet, spec, energy }
    })
}

/// Smooth bump of height 1 centred at arc length `center`, zero outside `half_width`.
pub fn bump(energy: &GraphEnergy, center: f64, half_width: f64) -> Vec<f64> {
    let sigma = &energy.base().sigma;
    let v: Vec<f64> = sigma
        .iter()
        .map(|s| {
            let u = (s - center) / half_width;
            if u.abs() < 1.0 {
                (1.0 - u * u).powi(4)
            } else {
                0.0
            }
        })
        .collect();
    energy.pin(&v)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

//! Numerical laboratory for rotationally symmetric self-expanders of mean
//! curvature flow and the rescaled flows that emanate from them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod ancient;
pub mod dual;
pub mod duhamel;
pub mod entropy;
pub mod error;
pub mod expander;
pub mod flow;
pub mod geometry;
pub mod graph_energy;
pub mod io;
pub mod modes_mz;
pub mod numeric;
pub mod ode;
pub mod spectral;

pub use error::{LabError, Result};

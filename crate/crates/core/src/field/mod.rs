//! Grids, nodal densities, finite-difference stencils and quadrature.

pub mod csv;
mod density;
mod grid;
mod joint;
mod stencil;

pub(crate) use density::log_values;
pub use density::{log_field, mollified_delta, DensityField, LogField, DEFAULT_FLOOR_RATIO};
pub use grid::{quadrature, Axis, Grid, MIN_NODES};
pub use joint::JointDensity;
pub use stencil::{diff1, diff1_line, diff2, diff2_line, partial};

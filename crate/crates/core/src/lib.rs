// NaN-rejecting checks are written as negated comparisons on purpose, and stencil
// loops index several arrays in step.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod field;
pub mod functionals;
pub mod potential;
pub mod scalar;
pub mod solver_fd;
pub mod solver_fk;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

pub type Grid = field::Grid<f64>;
pub type DensityField = field::DensityField<f64>;
pub type JointDensity = field::JointDensity<f64>;
pub type Potential = potential::Potential<f64>;
pub type PotentialFamily = potential::PotentialFamily<f64>;
pub type FlowTrajectory = solver_fd::FlowTrajectory<f64>;
pub type TransitionKernel = solver_fd::TransitionKernel<f64>;
pub type InfoValues = functionals::InfoValues<f64>;
pub type MutualValues = functionals::MutualValues<f64>;

//! Two-dimensional Ricci flow on the unit disk under the Neumann curvature
//! condition `R_ν = 0`, the Hamilton-type entropy `𝓔_∂`, the Guo-type
//! functional `𝓦_∂`, and numerical checks of their evolution identities.
//!
//! The evolving metric is always conformal to the flat disk, `g = e^u g₀`, so
//! Ricci flow reduces to the scalar equation `∂ₜu = −R`. All numerics are
//! generic over [`Real`] (`f32` or `f64`); the `*64` aliases below are what the
//! command line tool and the acceptance suite use.

pub mod cli;
pub mod elliptic;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod initial_data;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{ConformalMetric, EULER_CHARACTERISTIC};
pub use grid::{BoundaryField, Closure, GridSpec, PolarGrid, ScalarField, TensorField};
pub use scalar::Real;

pub type PolarGrid64 = grid::PolarGrid<f64>;
pub type PolarGrid32 = grid::PolarGrid<f32>;
pub type ScalarField64 = grid::ScalarField<f64>;
pub type BoundaryField64 = grid::BoundaryField<f64>;
pub type TensorField64 = grid::TensorField<f64>;
pub type Metric64 = geometry::ConformalMetric<f64>;
pub type Metric32 = geometry::ConformalMetric<f32>;
pub type FlowState64 = flow::FlowState<f64>;
pub type FlowTrajectory64 = flow::FlowTrajectory<f64>;
pub type EntropyRecord64 = entropy::EntropyRecord<f64>;
pub type NeumannSolution64 = elliptic::NeumannSolution<f64>;

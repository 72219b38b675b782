//! Generalized multiscale finite element solver for the steady linear
//! Boltzmann equation in discrete-ordinates form on heterogeneous media.
//!
//! The crate builds nested coarse/fine grids on the unit square, assembles
//! the fine-scale upwind discontinuous Galerkin system, constructs per-block
//! snapshot spaces (deterministic delta-inflow or randomized oversampled
//! solves), reduces them through an energy-minimizing extension and a local
//! generalized eigenvalue problem, and solves the coarse Galerkin system in
//! the resulting multiscale space. Error metrics and an experiment driver
//! reproduce the offline/online pipeline end to end.

pub mod elements;
pub mod error;
pub mod field;
pub mod inflow;
pub mod media;
pub mod mesh;
pub mod metrics;
pub mod ordinates;

mod assemble;
mod galerkin;
mod linalg;

pub mod experiment;
pub mod fine;
pub mod offline;
pub mod online;
pub mod snapshot;

pub use error::{Error, Result};
pub use field::KineticField;
pub use inflow::BoundaryData;
pub use media::{default_contrast_field, eval_media, MediaSpec};
pub use mesh::{build_nested_mesh, oversample, upwind_nodes, NestedMesh, OversampleRegion};
pub use ordinates::{OrdinateSet, ScatteringMatrix};

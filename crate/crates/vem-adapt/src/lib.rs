//! Fully adaptive remeshing for the first-order virtual element method in
//! 2D linear elasticity.
//!
//! The crate provides a polygonal mesh data structure with hanging-node
//! support, Voronoi-based mesh generation, refinement and coarsening
//! operators, a first-order VEM solver, superconvergent patch recovery with
//! energy-error estimation, and the adaptation driver that steers the mesh
//! toward a target relative error, element count, or node count.

pub mod adapt;
pub mod bench;
pub mod coarsen;
pub mod estimate;
pub mod geometry;
pub mod material;
pub mod mesh;
pub mod meshgen;
pub mod output;
pub mod refine;
pub mod solve;
pub mod vem;

pub use adapt::{run_adaptation, AdaptCaps, AdaptHistory, AdaptTarget};
pub use estimate::{ErrorReport, RecoveredStress};
pub use geometry::Point2;
pub use material::{ConstitutiveMatrix, MaterialParams, PlaneRegime};
pub use mesh::{BoundaryCondition, BoundarySegment, DomainSpec, PolyMesh};
pub use meshgen::MeshMode;
pub use solve::{Problem, SolutionField};

use thiserror::Error;

/// Errors produced by mesh, solver and adaptation operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("refinement failure: {0}")]
    Refinement(String),
    #[error("coarsening failure: {0}")]
    Coarsening(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

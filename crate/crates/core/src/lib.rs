//! Quadtree-parameterized topology optimization of plane-stress structures.
//!
//! A design is a set of per-level cell values on a hierarchy of grids. Each
//! cell paints a fixed pattern of elements (a frame at the coarsest level, a
//! plus-shaped cross at finer levels). A smooth minimum filter ties children
//! to their parents so that refinement only appears where the parent is solid.

pub mod error;
pub mod fea;
pub mod filters;
pub mod greedy;
pub mod hierarchy;
pub mod mapping;
pub mod optimizer;
pub mod pgm;
pub mod problems;
pub mod runner;
pub mod sensitivity;

pub use error::{Error, Result};
pub use fea::{FeModel, FeSolver, Material, SolverKind};
pub use filters::{DesignField, FilterParams};
pub use hierarchy::{CellId, DependencyMode, DependencyTable, QuadtreeHierarchy};
pub use greedy::BinaryQuadtree;
pub use mapping::{DensityField, DomainMask, TransformStack};
pub use optimizer::{run, Method, RunConfig};
pub use problems::{Problem, ProblemSpec};

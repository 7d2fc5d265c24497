use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("refinement level {level} out of range 1..={max_level}")]
    InvalidLevel { level: usize, max_level: usize },

    #[error("design field has {got} levels, hierarchy has {expected}")]
    LevelMismatch { expected: usize, got: usize },

    #[error("mask resolution {got:?} does not match element grid {expected:?}")]
    MaskMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("domain mask has no interior elements")]
    EmptyDomain,

    #[error("smooth minimum argument {value} is not strictly positive (cell {cell})")]
    NonPositiveArgument { cell: usize, value: f64 },

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("supports do not remove all rigid-body modes: {0}")]
    InsufficientSupports(String),

    #[error("stiffness matrix is singular or not positive definite")]
    SingularSystem,

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error("cell element set is empty")]
    EmptyCell,

    #[error("volume target {target:.6} is below the coarse-frame volume {frame:.6}")]
    InfeasibleTarget { target: f64, frame: f64 },

    #[error("volume multiplier bisection failed to bracket the target: volume at lower bounds {min_volume:.6}, target {target:.6}")]
    NonBracketing { min_volume: f64, target: f64 },

    #[error("optimizer subproblem infeasible: {0}")]
    SubproblemInfeasible(String),

    #[error("forward state is stale: {0}")]
    StaleState(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

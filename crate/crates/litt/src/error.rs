//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solver did not converge: {solver} reached {iterations} iterations with relative residual {relative_residual:.3e} (tolerance {tolerance:.3e})")]
    SolverDidNotConverge {
        solver: &'static str,
        iterations: usize,
        relative_residual: f64,
        tolerance: f64,
    },

    #[error("conjugate gradient breakdown: non-positive curvature p'Ap = {curvature:.3e} at iteration {iteration}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("matrix is not usable here: {0}")]
    InvalidMatrix(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("unknown boundary tag {0:?} on this mesh")]
    UnknownTag(crate::mesh::BoundaryTag),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line search failed after {trials} trials (last step {last_step:.3e}, cost {cost:.6e}, reference {reference:.6e})")]
    LineSearchFailure {
        trials: usize,
        last_step: f64,
        cost: f64,
        reference: f64,
    },

    #[error("time grids or meshes do not match: {0}")]
    GridMismatch(String),

    #[error("identification failed on measurement interval {interval}: {source}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

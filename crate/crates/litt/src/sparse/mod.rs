//! Minimal sparse linear algebra: CSR storage, CG and MINRES with
//! incomplete-Cholesky and Jacobi preconditioners, and mass-weighted products.
//!
//! Everything here is generic over the floating scalar; the crate root pins
//! the concrete aliases used by the physics layers.

mod matrix;
mod precond;
mod products;
mod solvers;

pub use matrix::CsrMatrix;
pub use precond::{
    incomplete_cholesky, jacobi, IdentityPrecond, IncompleteCholesky, JacobiPrecond,
    Preconditioner,
};
pub use products::{weighted_dot, weighted_norm};
pub use solvers::{cg_solve, cg_solve_warm, minres_solve, SolverReport};

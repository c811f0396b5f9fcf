//! Simulation of laser-induced thermotherapy (LITT) in liver tissue on an
//! axisymmetric finite-element mesh, and identification of the spatial blood
//! perfusion rate from temperature snapshots by adjoint-based optimization.
//!
//! The crate is organized along the pipeline:
//!
//! - [`sparse`] — CSR matrices, CG/MINRES, incomplete Cholesky and Jacobi
//!   preconditioners, mass-weighted inner products (generic over the scalar).
//! - [`mesh`] — the axisymmetric liver-with-applicator geometry, boundary
//!   tagging, and r-weighted P1 finite-element assembly.
//! - [`tissue`] — material constants, damage-dependent optics, Arrhenius law,
//!   laser power schedule.
//! - [`forward`] — coupled P1 radiation / bio-heat / damage time stepping.
//! - [`adjoint`] — the backward-in-time adjoint system with its damage memory
//!   terms.
//! - [`optimize`] — projected gradient descent and projected L-BFGS with an
//!   Armijo line search on the reduced cost functional.
//! - [`driver`] — synthetic vessels, (noisy) measurement generation, single-
//!   and multi-measurement identification workflows, error metrics, file I/O.

pub mod adjoint;
pub mod driver;
pub mod error;
pub mod forward;
pub mod mesh;
pub mod optimize;
pub mod sparse;
pub mod tissue;

pub use error::{Error, Result};

/// Concrete scalar used by the physics layers. The sparse kernels are generic;
/// the tissue constants (Arrhenius frequency factor 3.1e98 among them) and the
/// solver tolerances only make sense in f64.
pub type Scalar = f64;

/// Sparse matrix at the crate's working precision.
pub type SparseMatrix = sparse::CsrMatrix<Scalar>;

/// Solver report at the crate's working precision.
pub type SolverReport = sparse::SolverReport<Scalar>;

//! Axisymmetric geometry, boundary tagging, and r-weighted P1 assembly.

mod assembly;
mod field;
mod geometry;
pub mod vtk;

pub use assembly::{
    assemble_boundary_load, assemble_boundary_mass, assemble_mass, assemble_stiffness,
    basis_gradients, boundary_measure, elementwise_gradient, integrate, interpolate_at,
    lumped_mass, product_load, project_elementwise_to_nodes, Coefficient,
};
pub use field::{FeField, Unit};
pub use geometry::{build_mesh, AxiMesh, BoundaryEdge, BoundaryTag, GeometryConfig};

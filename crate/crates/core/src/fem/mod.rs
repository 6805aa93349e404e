//! Lagrange P1/P2 finite elements with homogeneous Dirichlet conditions.

mod assembly;
mod element;
mod function;
mod space;

pub use assembly::{
    assemble_boundary_coupling, assemble_mass, assemble_stiffness, assemble_weighted_mass, load_vector,
    node_load_vector,
};
pub use element::{barycentric, basis_gradients, basis_values, tet_geometry, MAX_LOCAL};
pub use function::{norms, project_function, DensityField, FeFunction};
pub use space::{FeSpace, BOUNDARY, FIELD_QUADRATURE_ORDER};

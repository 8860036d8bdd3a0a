//! P1 finite elements: quadrature, fields, assembly and derived operators.

pub mod assembly;
pub mod field;
pub mod ops;
pub mod quadrature;

pub use assembly::{
    assemble_boundary_mass, assemble_convection_by_gradient, assemble_convection_by_transport, assemble_mass,
    assemble_stiffness, boundary_cubic_jacobian, boundary_cubic_residual, boundary_load, load_vector,
    ElementGeometry,
};
pub use field::{interpolate, prolong, BoundaryField, BoundaryFn, FeField, ScalarFn, SmoothField};
pub use ops::{
    discrete_laplacian, elliptic_projection, h1_seminorm, l2_norm, norms, trilinear_B, Norms, ALL_TAGS,
};
pub use quadrature::{quadrature, EdgeRule, Quadrature, TriangleRule};

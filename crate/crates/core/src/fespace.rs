//! Continuous Lagrange finite element spaces on hierarchical meshes.

mod function;
mod interp;
pub mod lagrange;
mod pu;
pub mod quadrature;
mod space;

pub use function::{FeFunction, ShapeTable};
pub(crate) use function::values_at;
pub use interp::interpolate_patch;
pub use pu::{pu_basis, PuSpace};
pub use space::FeSpace;
pub(crate) use space::side_nodes;

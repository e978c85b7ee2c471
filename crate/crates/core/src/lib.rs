//! Goal-oriented adaptive finite elements with dual-weighted residual error
//! estimation on hierarchical quadrilateral meshes.

pub mod adapt;
pub mod assembly;
pub mod config;
pub mod dwr;
pub mod error;
pub mod experiments;
pub mod fespace;
pub mod mesh;
pub mod multigoal;
pub mod solvers;
pub mod sparse;
pub mod timeconsistency;
pub mod vtk;

pub use error::{Error, Result};

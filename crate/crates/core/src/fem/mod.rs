//! Geometry, triangulation and finite-element assembly.

mod assembly;
mod geometry;
mod mesh;

pub use assembly::{assemble, mass_matrix, AffineForms, AssemblyOptions, Coefficient};
pub use geometry::{Assignment, BoxKind, Geometry, LayoutBox};
pub use mesh::{triangulate, Mesh};

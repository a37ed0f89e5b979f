//! Linear finite elements and BDF time stepping for the Cahn-Hilliard
//! equation with dynamic Cahn-Hilliard boundary conditions on a disk.
//!
//! The unknown lives both in the bulk and on the boundary circle. On a
//! triangulated disk the bulk is discretised with P1 triangles and the
//! boundary with the induced P1 segment mesh, which gives the
//! differential-algebraic system
//!
//! ```text
//! M u' + A w = b1
//! M w  - A u = b2 + F(u)
//! ```
//!
//! with `M` and `A` the combined bulk + surface mass and stiffness
//! matrices. Time stepping uses k-step BDF (linear problems) and the
//! linearly implicit BDF variant with an extrapolated nonlinearity.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod mesh;
pub mod problems;
pub mod saddle;
pub mod sparse;

pub use error::{Error, Result};
pub use mesh::{Mesh2D, MeshError};
pub use sparse::SparseMatrix;

/// One value per mesh node.
pub type NodalVector = Vec<f64>;

//! Finite element solver for the steady convection-diffusion-reaction problem
//!
//! ```text
//! -ε Δu + β·∇u + σu = f   in Ω = (0,1)²
//! ```
//!
//! discretized with continuous P1 elements enriched by one cubic bubble per
//! triangle, stabilized by a residual-driven nonlinear artificial diffusion
//! (the "dynamic diffusion" method), and solved with a damped fixed-point
//! iteration started from SUPG.
//!
//! Module map:
//! - [`mesh`]: uniform triangulations of the unit square and element geometry.
//! - [`spaces`]: quadrature, P1 + bubble basis, dof numbering, field evaluation.
//! - [`linalg`]: triplet assembly buffers, CSR storage, sparse LU solves.
//! - [`assembly`]: problem description, bilinear form, diffusion matrix, Dirichlet reduction.
//! - [`dd`]: element Péclet numbers, the artificial diffusivity, SUPG start and fixed point.
//! - [`analysis`]: error norms, rate tables, built-in benchmarks and refinement studies.
//! - [`cli`]: the `ddfem` command-line front end.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod dd;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod spaces;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Point = [f64; 2];

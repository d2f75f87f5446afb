//! Finite-element solver for two-species Schnakenberg reaction-diffusion
//! systems on simplicial and quadrilateral meshes, with fully implicit time
//! stepping and an experiment harness.
//!
//! The pieces fit together as follows:
//!
//! - [`mesh`] builds or loads meshes;
//! - [`assembly`] turns a mesh into the mass, stiffness and nonlinear matrices;
//! - [`linsolve`] provides the CG and GMRES inner solvers;
//! - [`kinetics`] covers the reaction terms and Turing analysis;
//! - [`stepping`] advances a field pair by one timestep;
//! - [`harness`] drives whole experiments and writes their outputs.

pub mod assembly;
pub mod error;
pub mod harness;
pub mod kinetics;
pub mod linsolve;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod stepping;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    mod meshes {}
    #[doc = include_str!("../../../book/src/assembly.md")]
    mod assembly {}
    #[doc = include_str!("../../../book/src/kinetics.md")]
    mod kinetics {}
    #[doc = include_str!("../../../book/src/stepping.md")]
    mod stepping {}
    #[doc = include_str!("../../../book/src/nonlinear.md")]
    mod nonlinear {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

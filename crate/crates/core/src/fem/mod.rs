//! Finite-element spaces, assembly and solvers on triangle meshes.

pub mod assemble;
pub mod dirichlet;
pub mod element;
pub mod newton;
pub mod quadrature;
pub mod solve;
pub mod space;
pub mod sparse;
pub mod stokes;

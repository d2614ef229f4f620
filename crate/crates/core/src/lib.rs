//! Numerical laboratory for quantitative isoperimetric inequalities of the
//! controlled heat equation on a disk.

pub mod cli;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod controls;
pub mod radial_pde;
pub mod rearrange;
pub mod shape_hessian;
pub mod tridiag;
pub mod verifier;

pub use error::{Error, Result};

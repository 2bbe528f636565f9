//! Numerical model of an all-optical von Neumann measurement of a field quadrature.

extern crate blas_src;

pub mod error;
pub mod factorization;
pub mod fock;
pub mod gaussian;
pub mod linalg;
pub mod measurement;
pub mod montecarlo;
pub mod scheme;

pub use error::{Error, Result};
pub use linalg::C64;

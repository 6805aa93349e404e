//! Finite-element discretization of Kohn-Sham density functional models,
//! with the tooling to measure a priori convergence rates.

pub mod analysis;
pub mod error;
pub mod fem;
pub mod ksdft;
pub mod mesh;
pub mod physics;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};

//! Fluid-beam interaction on a moving two-dimensional domain.
//!
//! The fluid lives on a fixed reference domain and is transported to the
//! physical domain by a normal-fibre (Hanzawa) transform driven by the beam
//! displacement. Each time slab is solved by Picard iteration around a
//! linear monolithic fluid-beam step, and slabs are chained until the
//! horizon or until the geometry degenerates.

pub mod error;
pub mod assembly;
pub mod coupled;
pub mod driver;
pub mod expr;
pub mod fem;
pub mod fourier;
pub mod geometry;
pub mod mesh;
pub mod nonlinear;
pub mod spaces;
pub mod sparse;
pub mod stokes;

pub use error::{Error, Result};

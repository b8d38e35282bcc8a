//! Numerical laboratory for self-growing (Jeans-type) blow-up in a family
//! of quasilinear wave equations.
//!
//! The crate integrates the homogeneous reference profile with blow-up
//! detection, realizes the compactified-time change of variables and its
//! identity lattice, assembles and certifies the singular-system matrices,
//! constructs the characteristic cone and the lens-shaped region with its
//! weakly-spacelike boundary checks, and runs a desk-scale 1-D simulator
//! of the full wave equation against the reference envelopes.

pub mod compact;
pub mod error;
pub mod fuchsian;
pub mod geometry;
pub mod interp;
pub mod linalg;
pub mod manifest;
pub mod ode;
pub mod params;
pub mod quad;
pub mod rk;
pub mod wave;

pub use error::{Error, Result};
pub use params::{DerivedConstants, ParameterSet};

//! Sub-Riemannian geometry of the unit 3-sphere with the distribution spanned by the
//! left-invariant fields `X` and `Y`: geodesics, the modified action and the transport
//! machinery for the heat kernel of the sub-Laplacian.

pub mod action;
pub mod cli;
pub mod error;
pub mod geodesics_cartesian;
pub mod geodesics_hyperspherical;
pub mod hamiltonian;
pub mod kernel;
pub mod numeric;
pub mod ode;
#[cfg(test)]
mod properties;
pub mod s3_core;
pub mod verify;

pub use error::{Error, Result};

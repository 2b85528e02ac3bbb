//! Mean-field McKean–Vlasov dynamics on graphops.
//!
//! The crate is organized by layer: [`torus`] provides the periodic grid and
//! its spectral calculus, [`graphops`] the network operators and their
//! spectral estimates, [`solver`] the PDE integrator, [`entropy`] the
//! functional-inequality diagnostics, [`particles`] the finite-N system, and
//! [`sakaguchi`] the model with intrinsic frequencies.

pub mod entropy;
pub mod error;
pub mod graphops;
pub mod particles;
pub mod sakaguchi;
pub mod solver;
pub mod torus;

pub use error::{Error, Result};

//! Numerical core for a heavy tracer particle coupled to an ideal Bose gas.
//!
//! The crate holds two descriptions of the same physical system and the
//! machinery to compare them:
//!
//! * [`microscopic`]: the full (N+1)-body Schrödinger evolution on a tensor
//!   grid, propagated by Strang splitting.
//! * [`macroscopic`]: the effective description, a freely evolving reference
//!   field, an excitation field with an inhomogeneous Hartree-type equation,
//!   and a classical Newtonian tracer.
//! * [`intermediate`]: the one-particle Hartree field driven by the mean
//!   tracer position, which links the two.
//! * [`diagnostics`]: the comparison functionals and explicit a-priori bound
//!   margins.
//!
//! Everything here is pure computation over `alloc` containers; file formats,
//! the CLI and sweep orchestration live in the `bosetracer` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
mod error;
pub mod fft;
pub mod field;
pub mod intermediate;
pub mod macroscopic;
pub mod microscopic;
pub mod model;

pub use error::{Error, ErrorKind, Result};
pub use field::{DensityMatrix, Direction, Field, Grid, ManyBodyField, MemoryCap, Norms, Point, Projector};
pub use model::{BumpSpec, ModelConfig};

/// Complex sample type used by every field.
pub type C64 = num_complex::Complex64;

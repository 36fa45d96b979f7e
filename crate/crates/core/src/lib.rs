//! Fuel-optimal powered descent for a planar lunar lander.
//!
//! Everything in this crate works in dimensionless units (lengths in Moon
//! radii, gravitational parameter normalized to one). The building blocks are:
//!
//! - [`params`]: physical constants and the reference scales.
//! - [`dynamics`]: point-mass dynamics, Hamiltonian, costate equations and the
//!   pointwise optimal control laws.
//! - [`ode`]: an adaptive Dormand–Prince 5(4) integrator with dense output and
//!   zero-crossing refinement.
//! - [`extremal`]: backward propagation of the parameterized system from
//!   touchdown conditions, and training-set assembly.
//! - [`shooting`]: indirect shooting with smoothed throttle and homotopy on the
//!   smoothing constant, used as the optimality reference.
//! - [`mlp`]: small feedforward networks trained with Levenberg–Marquardt.
//! - [`guidance`]: closed-loop neural guidance and landing statistics.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod extremal;
pub mod guidance;
mod linalg;
pub(crate) mod math;
pub mod mlp;
pub mod ode;
pub mod params;
pub mod shooting;

pub use dynamics::{Costate, LanderState, ThrustCommand};
pub use error::{Error, Result};
pub use params::{DimensionlessParams, PhysicalParams, Scaling, SiState};

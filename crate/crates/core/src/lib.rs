//! Numerical core for the liberation of two projections.
//!
//! Given symmetries `R = 2P - 1` and `S = 2Q - 1` with traces `alpha`, `beta`, the
//! spectral law `nu_t` of `R U_t S U_t*` (with `U_t` a free unitary Brownian motion)
//! is described through its Herglotz transform `H(t, z)`. This crate integrates the
//! characteristic system of the governing PDE, checks the subordination identities,
//! traces the domains `Omega_t`, and recovers densities and atoms of `nu_t` and of the
//! law `mu_t` of `P U_t Q U_t*`.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod closedform;
pub mod domain;
pub mod error;
pub mod flow;
pub mod inversion;
pub mod measures;
pub mod transforms;

mod ode;

#[cfg(test)]
mod dual;

pub use error::{Error, Result};
pub use num_complex::Complex64;

//! Simulation and analysis core for strain-tunable entangled-light-emitting
//! diodes built around a quantum-dot biexciton–exciton cascade.
//!
//! The crate is `no_std` (it needs `alloc`) and deterministic: all
//! transcendental functions go through `libm` and all randomness through
//! [`rng`] streams keyed by an explicit seed.
//!
//! | module | contents |
//! |---|---|
//! | [`quantum`] | polarization kets, two-photon states, density matrices, entanglement measures |
//! | [`strain`] | fine-structure splitting and polarization angle under stress, parameter fitting |
//! | [`cascade`] | Monte Carlo of time-tagged photon pairs and coincidence histograms |
//! | [`analysis`] | g², degree of correlation, fidelity, Bell parameters, gating, FSS scans |
//! | [`tomography`] | 16-setting tomography, linear inversion and maximum likelihood |
//! | [`yield_stats`] | ensemble statistics of the minimum reachable splitting |

#![no_std]
// `!(x > 0.0)` also rejects NaN; small fixed-size matrix code reads best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
pub mod cascade;
pub mod error;
pub mod math;
pub mod optim;
pub mod quantum;
pub mod rng;
pub mod strain;
pub mod tomography;
pub mod yield_stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Core numerics for branching Brownian motion with drift `-theta`, killed
//! when a particle first touches the origin.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is a
//! pure function of its inputs:
//!
//! * [`special`]: Hermite polynomials, Gaussian kernels, killed-Brownian
//!   transition probabilities, the Bessel-3 density and the closed-form
//!   expected population counts.
//! * [`quad`]: adaptive Gauss-Kronrod quadrature used by the closed forms.
//! * [`series`]: Hermite expansions of shifted Gaussian CDFs/densities and the
//!   order-`m` predictions for the normalized population counts.
//! * [`sim`]: an exact event-driven simulator with Brownian-bridge absorption.
//! * [`spine`]: size-biased spine sampling and many-to-one estimators.
//! * [`martingale`]: Hermite martingales and their limit estimates.
//! * [`validation`]: deterministic and pathwise checks of the expansions.
//!
//! IO, the command line and parallel fan-out live in the `kbbm` crate.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod law;
pub mod martingale;
pub mod quad;
pub mod rng;
pub mod series;
pub mod sim;
pub mod special;
pub mod spine;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use law::OffspringLaw;
pub use sim::{Absorption, SimConfig, Simulation, Snapshot};
pub use special::{DriftParams, Interval};

//! Exact, seed-deterministic simulation of totally asymmetric exclusion
//! processes on the half-line with finite-range boundary mechanisms.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and a 64-bit master seed: the clocks of the
//! graphical construction are counter-based substreams, so any stream can
//! be materialized lazily and in any order without changing a trajectory.
//!
//! Module map:
//!
//! - [`model`]: class labels, configurations, boundary mechanisms and the
//!   elementary state transitions.
//! - [`harris`]: Poisson clock streams and their chronological merge.
//! - [`engine`]: the event sweep, trajectory statistics, truncation checks.
//! - [`multiclass`]: priority dynamics with class-specific entry rules.
//! - [`coupling`]: several configurations driven by one set of clocks.
//! - [`estimators`]: replica-level Monte Carlo estimators.
//! - [`oracle`]: exact stationary solver for tiny lattices.

#![no_std]

extern crate alloc;

#[cfg(any(feature = "std", test))]
extern crate std;

pub mod coupling;
pub mod engine;
mod error;
pub mod estimators;
pub mod harris;
pub mod model;
pub mod multiclass;
pub mod oracle;
pub mod stats;

pub use error::{Error, Result};

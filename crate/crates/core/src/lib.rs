//! Jointly optimal transmission scheduling and remote estimation with an
//! energy-harvesting sensor.
//!
//! A sensor observes a source, holds a battery of at most `B` energy units
//! that refills at random, and decides at every step whether to spend one
//! unit to send its observation to a remote estimator. The estimator keeps
//! a running estimate. The pair minimizes the expected sum of communication
//! costs and distortions over a finite horizon.
//!
//! The crate is organised as:
//!
//! * [`dist`]: finite pmfs on the integers, almost-symmetric-unimodal
//!   (a.s.u.) checks, majorization and the threshold prescription builder.
//! * [`model`]: the problem instance, energy dynamics, distortions and
//!   closed-loop simulation.
//! * [`belief`]: the estimator's beliefs, their update maps and exact cost
//!   evaluation of a strategy pair by belief-tree expansion.
//! * [`solver`]: backward induction over (error, energy) for integer random
//!   walks, i.i.d. sources and isotropic Gaussian sources.
//! * [`oracle`]: brute-force strategy enumeration and a belief-space DP over
//!   threshold prescriptions, used to certify the solver.
//! * [`config`]: the TOML instance file format.

pub mod belief;
pub mod config;
pub mod dist;
mod error;
pub mod model;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};

//! Weighted pseudo-outcome regression for conditional average treatment
//! effects.
//!
//! The crate covers the whole estimation pipeline: simulation designs with
//! exact ground truth ([`sim`]), weighted boosted trees ([`gbt`]),
//! cross-fitted nuisance estimation ([`crossfit`]), pseudo-outcomes and
//! regression weights ([`pseudo`]), a weighted local-polynomial smoother
//! ([`lp`]), learner assembly ([`learners`]) and the benchmark harness
//! ([`bench`]). [`verify`] bundles the numerical self-checks.

pub mod bench;
pub mod crossfit;
pub mod error;
pub mod gbt;
pub mod io;
pub mod learners;
pub mod lp;
pub mod pseudo;
pub mod rng;
pub mod sim;
pub mod verify;

pub use error::{CateError, Result};

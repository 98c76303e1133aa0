//! Blind tomography: recovering a quantum state together with unknown
//! calibration coefficients from linear measurements.
//!
//! The unknown is modelled as a block signal `X = ξ ⊗ ρ` whose blocks are
//! `ξ_k ρ`, with `ξ` sparse and `ρ` low rank. Recovery runs projected
//! gradient descent over that structure ([`recovery::sdt`]) or alternating
//! least squares ([`recovery::als_bt`]).

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod measurements;
pub mod parallel;
pub mod projections;
pub mod recovery;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};

//! Regenerative simulation of Harris-recurrent Markov processes.
//!
//! The crate builds continuous-time Nummelin splitting for finite-state
//! chains: the resolvent kernel of the exponential skeleton, a minorization
//! certificate over a small set, and two distributionally equivalent
//! regeneration-cycle generators (the literal four-step split chain and a
//! retrospective coin method). On top of the i.i.d. cycles it estimates the
//! constants of the bound calculus (C(f), K(f), B(f), m, v*_t, the
//! cycle-length Laplace transform), evaluates the explicit deviation bounds
//! for positive-recurrent, null-recurrent and regular regimes, and verifies
//! the moment/deviation inequalities statistically against replicated
//! simulation. One-dimensional diffusions with hitting-time regeneration and
//! exact Brownian cycle sampling round out the model families.

// Negated float comparisons like `!(x > 0.0)` are used on validation paths
// so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod models;
pub mod montecarlo;
pub mod regeneration;
pub mod resolvent;
pub mod splitting;
pub mod stats;
pub mod streams;
pub mod verify;

pub use error::{Error, Result};

//! Shared-battery reliability analysis for Markov-modulated net generation.
//!
//! A battery of capacity `B` is charged and discharged greedily by the summed
//! net generation of `N` independent prosumers, each described by a finite
//! Markov chain with an integer reward per state. This crate computes
//!
//! - exact loss-of-load probabilities (LOLP) from the stationary law of the
//!   `(occupancy, background state)` chain, and Monte Carlo estimates with
//!   batch-means confidence intervals ([`battery`]);
//! - the scaled cumulant generating function `Λ(θ)` through the Perron root of
//!   the tilted time-reversed transition matrix, and the decay rate `λ` of the
//!   LOLP in the battery size ([`ldp`]);
//! - minimal battery sizes for a reliability target, both for chains and for
//!   real-valued traces, and the worst-case-over-subsets scaling study
//!   ([`sizing`], [`study`]);
//! - trace arithmetic and empirical chain fitting ([`trace`], [`fit`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, CSV ingestion
//! and the command line live in the companion `battpool` crate.
//!
//! ```
//! use battpool_core::{chain::UserModel, ldp};
//!
//! let model = UserModel::new(
//!     vec!["deficit".into(), "surplus".into()],
//!     vec![vec![0.4, 0.6], vec![0.4, 0.6]],
//!     vec![-1.0, 1.0],
//! )
//! .unwrap();
//! let decay = ldp::decay_rate(&model).unwrap();
//! assert!((decay.lambda - 1.5f64.ln()).abs() < 1e-9);
//! ```
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod battery;
pub mod chain;
mod error;
pub mod fit;
pub mod ldp;
mod linalg;
pub mod matrix;
pub mod perron;
pub mod sizing;
pub mod study;
pub mod trace;

pub use error::{Error, Result};

/// Cap on the number of joint background states built by
/// [`chain::product_chain`].
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Cap on the number of `(occupancy, state)` unknowns in an exact battery solve.
pub const DEFAULT_SOLVER_CAP: usize = 2_000_000;

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact verification of task circuits extracted from a small transformer
//! built from piecewise-affine operators.
//!
//! The crate is organised bottom-up:
//!
//! - [`exact`], [`affine`], [`scalar`]: rational arithmetic and affine forms
//!   over ℓ∞ boxes, plus the scalar abstraction shared by float (training)
//!   and rational (verification) evaluation.
//! - [`ops`]: sparsemax, Signed L1 BandNorm, LeakyReLU and causal sparsemax
//!   attention, with branch records and hand-written gradients.
//! - [`tasks`], [`model`]: the two symbolic tasks and the decoder-only model
//!   with its training loop.
//! - [`circuit`]: the coarse residual graph, zero-ablation forward and the
//!   greedy extractor.
//! - [`verify`]: the four circuit properties, certified robustness radii and
//!   SMT-LIB export.
//! - [`distill`]: surrogate fitting and enumerative program search.
//! - [`artifacts`], [`pipeline`]: on-disk formats and the batch commands.

pub mod affine;
pub mod artifacts;
pub mod circuit;
pub mod distill;
pub mod error;
pub mod exact;
pub mod model;
pub mod ops;
pub mod pipeline;
pub mod scalar;
pub mod tasks;
pub mod verify;

pub use error::{Error, Result};
pub use exact::{float_to_exact, ExactScalar};

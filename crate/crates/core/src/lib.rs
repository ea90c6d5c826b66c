//! Core library for user-level differentially private model personalization
//! with a shared low-dimensional representation.
//!
//! The crate implements three private learning pipelines over planted
//! linear-regression and margin-classification problems:
//!
//! * [`fedrep`] — federated alternating minimization with per-round gradient
//!   clipping and Gaussian noise on the shared embedding,
//! * [`init`] — private spectral initialization from label-weighted
//!   cross-term outer products,
//! * [`classify`] — sketch-and-select classification: a random sign
//!   projection, a Frobenius-ball cover, and the exponential mechanism.
//!
//! Supporting modules provide dense numerical primitives ([`mat`],
//! [`subspace`]), synthetic data generation ([`synth`]), the privacy
//! mechanisms and accountant ([`dp`]), and risk evaluation ([`metrics`]).
//!
//! Everything is deterministic given a seed: all randomness flows through
//! keyed counter-based streams ([`rng`]), so results never depend on
//! scheduling or worker count. The crate is `no_std`-compatible (with
//! `alloc`) when built with `--no-default-features --features libm`.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` guards reject NaN along with nonpositive values; the
// clippy-preferred `x <= 0.0` silently admits NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod classify;
pub mod dp;
pub mod fedrep;
pub mod init;
pub mod mat;
pub mod metrics;
pub mod rng;
pub mod subspace;
pub mod synth;

pub use mat::Mat;
pub use rng::{Purpose, StreamKey};
pub use subspace::{OrthonormalBasis, UpperTriangularFactor};

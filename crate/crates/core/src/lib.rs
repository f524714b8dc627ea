//! Low-temperature local MCMC on sparse estimation problems.
//!
//! Supports live on the Johnson graph of k-subsets of `{0..p}`. Two planted models are
//! provided (a sparse Gaussian additive model / tensor PCA, and sparse linear regression),
//! together with a Metropolis chain, an exhaustive spanning-tree certificate for small
//! state spaces, landscape diagnostics, and a sweep harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gam;
pub mod landscape;
pub mod math;
pub mod regression;
pub mod rng;
pub mod support;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use support::{neighbors, overlap, random_support, Support, SupportIndexer, SwapMove};

//! Decentralized stochastic gradient Langevin dynamics with gradient tracking.
//!
//! Each of `N` agents holds a local potential `f_i`; together they sample from
//! `π ∝ exp(-Σ_i f_i)` while talking only to neighbours over a time-varying
//! undirected network. The crate is split along the pipeline:
//!
//! - [`network`]: graph schedules (barbell, lollipop, complete), Metropolis
//!   mixing matrices and B-step spectral diagnostics.
//! - [`models`]: decomposed potentials with exact and minibatch gradients.
//! - [`data`]: synthetic generators, the breast-cancer CSV reader, partitions.
//! - [`samplers`]: the tracking sampler, the plain decentralized baseline and
//!   a centralized Langevin reference chain.
//! - [`metrics`]: Gaussian 2-Wasserstein distance, ensemble moments,
//!   consensus error and accuracy.
//! - [`theory`]: numeric evaluation of the convergence-bound constants and
//!   the explicit stepsize/iteration schedules.

// `!(x > 0.0)` rejects NaN alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod network;
pub mod rng;
pub mod samplers;
pub mod theory;

pub use error::{Error, Result};

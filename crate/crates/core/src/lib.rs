//! Steady-state overflow probabilities of a two-station Markovian tandem queue.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery:
//!
//! - [`model`]: the tandem network, its uniformized transition kernel and the
//!   closed-form stationary quantities used as ground truth.
//! - [`rng`] and [`simulate`]: seeded, platform-independent sampling of
//!   trajectories and regenerative cycles.
//! - [`estimators`]: regenerative importance sampling, marginal (stationary
//!   ratio) importance sampling and the rMSE summary.
//! - [`kernels`]: the positive-definite kernels and the median bandwidth
//!   heuristic.
//! - [`ratio`]: the learned stationary likelihood ratio (network, kernelized
//!   residual loss, Adam, training loop).
//!
//! IO, configuration, timing and the command line live in the companion
//! `tandem-is` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod estimators;
pub mod kernels;
pub mod model;
pub mod ratio;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{QueueState, StabilityClass, TandemParams};

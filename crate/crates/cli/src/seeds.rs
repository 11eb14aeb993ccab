//! Fan-out of the master seed into per-round random streams.
//!
//! Every stream is `RngStream::new(master_seed, derive_stream(tag, parts))`,
//! where `derive_stream` folds `parts` into `tag` with splitmix64. The parts
//! are the IEEE-754 bits of the rates involved, then `γ` where it matters, then
//! the round index. Output paths and thread counts never enter, so they cannot
//! change results; the master seed always does.

use sha2::{Digest, Sha256};
use tandem_core::rng::{derive_stream, RngStream};

use crate::config::Rates;

/// Trajectory of an alternative system, shared by MIS and every MLIS cell.
pub const TRAJECTORY: u64 = 0x7472_616a;
/// Fresh evaluation trajectory for MLIS.
pub const EVALUATION: u64 = 0x6576_616c;
/// Trajectory of the original system for plain Monte Carlo.
pub const MONTE_CARLO: u64 = 0x6d63;
pub const RIS: u64 = 0x0072_6973;
/// Seed of the network initialization and batch sampling.
pub const TRAINING: u64 = 0x0074_7261_696e;

pub fn trajectory(master: u64, alt: &Rates, round: u64) -> RngStream {
    let [a, b, c] = alt.bits();
    RngStream::new(master, derive_stream(TRAJECTORY, &[a, b, c, round]))
}

pub fn evaluation(master: u64, alt: &Rates, round: u64) -> RngStream {
    let [a, b, c] = alt.bits();
    RngStream::new(master, derive_stream(EVALUATION, &[a, b, c, round]))
}

pub fn monte_carlo(master: u64, original: &Rates, round: u64) -> RngStream {
    let [a, b, c] = original.bits();
    RngStream::new(master, derive_stream(MONTE_CARLO, &[a, b, c, round]))
}

pub fn ris(master: u64, alt: &Rates, gamma: u64, round: u64) -> RngStream {
    let [a, b, c] = alt.bits();
    RngStream::new(master, derive_stream(RIS, &[a, b, c, gamma, round]))
}

/// `TrainConfig::seed` for one alternative, kernel set and round. The kernel
/// set enters through the first 8 bytes of the SHA-256 of its name.
pub fn training(master: u64, alt: &Rates, kernels: &str, round: u64) -> u64 {
    let [a, b, c] = alt.bits();
    let digest = Sha256::digest(kernels.as_bytes());
    let name = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
    derive_stream(master, &[TRAINING, a, b, c, name, round])
}

//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed with an
//! independent 64-bit stream id, so `(seed, stream)` reproduces the same
//! sequence on every platform and parallel rounds never share state.
//! Stream ids for `(round, cycle, ...)` coordinates come from [`derive_stream`].

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// A child stream of this one, identified by `path`.
    pub fn child(&self, path: &[u64]) -> Self {
        Self::new(self.seed, derive_stream(self.stream, path))
    }

    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(self.stream);
        StreamRng { inner }
    }
}

pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-and-reject).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let wide = u128::from(self.next_u64()) * u128::from(n);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    /// `k` distinct indices from `0..n`, in increasing order (Floyd's algorithm).
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> alloc::vec::Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct values from {n}");
        let mut chosen = alloc::collections::BTreeSet::new();
        for j in (n - k)..n {
            let t = self.below(j as u64 + 1) as usize;
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        chosen.into_iter().collect()
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `base` with SplitMix64 finalization after every word.
///
/// `derive_stream(s, &[a, b])` equals `derive_stream(derive_stream(s, &[a]), &[b])`.
pub fn derive_stream(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |acc, &word| {
        let mut state = acc ^ word.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        splitmix64(&mut state)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_streams_repeat() {
        let a: alloc::vec::Vec<u64> = {
            let mut r = RngStream::new(7, 3).rng();
            (0..16).map(|_| r.next_u64()).collect()
        };
        let mut r = RngStream::new(7, 3).rng();
        for v in a {
            assert_eq!(v, r.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3).rng();
        let mut b = RngStream::new(7, 4).rng();
        let mut c = RngStream::new(8, 3).rng();
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn derive_is_compositional_and_spreads() {
        assert_eq!(derive_stream(5, &[1, 2]), derive_stream(derive_stream(5, &[1]), &[2]));
        assert_ne!(derive_stream(5, &[1, 2]), derive_stream(5, &[2, 1]));
        assert_ne!(derive_stream(5, &[0]), derive_stream(6, &[0]));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::new(1, 1).rng();
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn distinct_sample() {
        let mut r = RngStream::new(2, 9).rng();
        let s = r.sample_distinct(10, 10);
        assert_eq!(s, (0..10).collect::<alloc::vec::Vec<_>>());
        let s = r.sample_distinct(1000, 50);
        assert_eq!(s.len(), 50);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|&i| i < 1000));
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = RngStream::new(3, 0).rng();
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[r.below(3) as usize] += 1;
        }
        for c in counts {
            assert!((9_000..11_000).contains(&c));
        }
    }
}

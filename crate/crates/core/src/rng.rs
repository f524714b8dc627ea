//! Counter-based random streams.
//!
//! Every value is a pure function of `(master_seed, stream_id, draw_index)`. A stream can
//! therefore be replayed from any position, replicas are reproducible in isolation, and
//! lazily generated Gaussian noise agrees bit-for-bit with a materialized table.
//!
//! Two independent views share one key:
//! - a sequential word stream (the [`RngCore`] impl) used for proposals and sampling,
//! - an indexed Gaussian table ([`RngStream::gaussian`]) used for noise entries.
//!
//! They are domain-separated, so drawing from one never shifts the other.

use rand::RngCore;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD6E8_FEB8_6659_FD93;
const GAUSS_DOMAIN: u64 = 0x5851_F42D_4C95_7F2D;

#[inline]
fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an arbitrary list of words into one seed. Used for seed derivation
/// (e.g. replica seeds from a master seed and grid coordinates).
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x2545_F491_4F6C_DD1D, |acc, &x| {
        fmix64(acc ^ fmix64(x.wrapping_add(GOLDEN)))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Key {
    k1: u64,
    k2: u64,
}

impl Key {
    fn new(master_seed: u64, stream_id: u64) -> Self {
        let k1 = fmix64(master_seed ^ GOLDEN);
        let k2 = fmix64(stream_id.wrapping_mul(STREAM_MUL) ^ k1.rotate_left(23));
        Key { k1, k2 }
    }

    #[inline]
    fn word(&self, domain: u64, index: u64) -> u64 {
        let a = fmix64(index.wrapping_mul(GOLDEN) ^ self.k1 ^ domain);
        fmix64(a.wrapping_add(self.k2))
    }
}

/// Uniform in the half-open interval (0, 1].
#[inline]
fn open_unit(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A deterministic random stream identified by `(master_seed, stream_id)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "StreamId", into = "StreamId")]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    counter: u64,
    key: Key,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct StreamId {
    master_seed: u64,
    stream_id: u64,
}

impl From<StreamId> for RngStream {
    fn from(s: StreamId) -> Self {
        RngStream::new(s.master_seed, s.stream_id)
    }
}

impl From<RngStream> for StreamId {
    fn from(r: RngStream) -> Self {
        StreamId { master_seed: r.master_seed, stream_id: r.stream_id }
    }
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.master_seed == other.master_seed
            && self.stream_id == other.stream_id
            && self.counter == other.counter
    }
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id, counter: 0, key: Key::new(master_seed, stream_id) }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of sequential words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// A sibling stream with the same master seed.
    pub fn substream(&self, stream_id: u64) -> RngStream {
        RngStream::new(self.master_seed, stream_id)
    }

    /// Standard normal variate at `draw_index` (Box–Muller, cosine branch).
    ///
    /// Pure in `(master_seed, stream_id, draw_index)`; does not advance the stream.
    #[inline]
    pub fn gaussian(&self, draw_index: u64) -> f64 {
        let base = draw_index.wrapping_mul(2);
        let u1 = open_unit(self.key.word(GAUSS_DOMAIN, base));
        let u2 = open_unit(self.key.word(GAUSS_DOMAIN, base.wrapping_add(1)));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n` drawn from the sequential stream (`n > 0`).
    ///
    /// Goes through `u64` so results do not depend on the target's pointer width.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        use rand::Rng;
        debug_assert!(n > 0);
        self.random_range(0..n)
    }

    /// Uniform real in [0, 1) from the sequential stream.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let w = self.key.word(0, self.counter);
        self.counter += 1;
        w
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Stream ids used when generating instances and running chains from one seed.
pub mod streams {
    pub const PLANTED: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DESIGN: u64 = 3;
    pub const CHAIN: u64 = 4;
    pub const SAMPLING: u64 = 5;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_pure() {
        let a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        let _ = b.next_u64();
        for i in [0u64, 1, 17, u64::MAX / 3] {
            assert_eq!(a.gaussian(i).to_bits(), b.gaussian(i).to_bits());
        }
    }

    #[test]
    fn gaussian_moments() {
        let r = RngStream::new(9, 0);
        let n = 1_000_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let z = r.gaussian(i);
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let a = RngStream::new(3, 0);
        let b = RngStream::new(3, 1);
        let n = 100_000u64;
        let mut sxy = 0.0;
        let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (x, y) = (a.gaussian(i), b.gaussian(i));
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / nf / nf;
        let r = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(r.abs() < 0.02, "correlation {r}");
    }

    #[test]
    fn sequential_stream_replays() {
        let mut a = RngStream::new(1, 2);
        let first: Vec<u64> = (0..5).map(|_| a.next_u64()).collect();
        let mut b = RngStream::new(1, 2);
        let again: Vec<u64> = (0..5).map(|_| b.next_u64()).collect();
        assert_eq!(first, again);
        assert_eq!(a.position(), 5);
    }

    #[test]
    fn below_is_in_range() {
        let mut r = RngStream::new(5, 5);
        for n in [1u64, 2, 3, 1000] {
            for _ in 0..100 {
                assert!(r.below(n) < n);
            }
        }
    }
}

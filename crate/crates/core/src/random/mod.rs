//! Counter-based randomness with labeled sub-streams, plus the samplers the
//! sketches draw from.
//!
//! Every random choice in the crate is a pure function of `(seed, labels, counter)`,
//! so a sketch instance can regenerate the realization tied to a coordinate on every
//! update to it. That is what keeps the sketches linear under turnstile updates.

mod dist;
mod grid;

pub use dist::{
    binomial, duplicate_cell, gaussian_sum, geometric_gap, sample_duplicate_counts,
    sample_exponential, signed_count, signed_sum, standard_normal, uniform_mu, CountStrategy,
    DuplicateCounts, ExpClip, GeometricGap, CLIP_EXPONENT,
};
pub use grid::{interval_probability, DiscretizationGrid};

use std::convert::Infallible;

use rand::TryRng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, then mixed; labels are short constants.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// SplitMix64 stream whose starting point is derived from a seed and a label path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomSource {
    key: u64,
    counter: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed ^ 0x6a09_e667_f3bc_c908), counter: 0 }
    }

    /// Independent sub-stream named by `label`.
    pub fn stream(&self, label: &str) -> Self {
        Self { key: mix64(self.key ^ hash_label(label)), counter: 0 }
    }

    /// Independent sub-stream named by an integer (row, key, trial number, ...).
    #[inline]
    pub fn child(&self, id: u64) -> Self {
        Self { key: mix64(self.key ^ mix64(id.wrapping_add(GAMMA))), counter: 0 }
    }

    #[inline]
    pub fn child2(&self, a: u64, b: u64) -> Self {
        self.child(a).child(b)
    }

    /// A fresh 64-bit seed for constructing a nested component.
    pub fn seed(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)`.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        ((self.next_word() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform sign.
    #[inline]
    pub fn sign(&mut self) -> i64 {
        if self.next_word() >> 63 == 0 {
            1
        } else {
            -1
        }
    }
}

impl TryRng for RandomSource {
    type Error = Infallible;

    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        Ok((self.next_word() >> 32) as u32)
    }

    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        Ok(self.next_word())
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> Result<(), Infallible> {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let a: Vec<u64> = {
            let mut s = RandomSource::new(7).stream("x").child(3);
            (0..5).map(|_| s.next_word()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RandomSource::new(7).stream("x").child(3);
            (0..5).map(|_| s.next_word()).collect()
        };
        assert_eq!(a, b);
        let mut c = RandomSource::new(7).stream("y").child(3);
        assert_ne!(a[0], c.next_word());
    }

    #[test]
    fn substreams_uncorrelated() {
        let root = RandomSource::new(11);
        let mut a = root.stream("alpha");
        let mut b = root.stream("beta");
        let n = 200_000;
        let (mut sab, mut sa, mut sb, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.unit();
            let y = b.unit();
            sab += x * y;
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        // Sample correlation of independent streams has standard deviation 1/sqrt(n).
        assert!(corr.abs() < 3.0 / nf.sqrt(), "corr = {corr}");
    }

    #[test]
    fn below_is_in_range_and_unit_in_interval() {
        let mut s = RandomSource::new(1);
        for _ in 0..10_000 {
            assert!(s.below(7) < 7);
            let u = s.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }
}

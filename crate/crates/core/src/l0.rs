//! L0 sampling: a uniform coordinate of the support, with its exact value.
//!
//! Each copy assigns coordinates a geometric depth and keeps, per depth level, a
//! 1-sparse detector over the coordinates reaching that level: the plain sum, the
//! index-weighted sum, and a polynomial fingerprint `sum_i x_i z^i` over the field of
//! integers modulo the Mersenne prime `2^127 - 1`. The shallowest level that verifies
//! as 1-sparse holds the coordinate of strictly largest depth, which is uniform over the
//! support by symmetry.

use crate::error::{config, Error, Result};
use crate::random::RandomSource;
use crate::{SampleOutcome, Sketch, TurnstileUpdate};

const P127: u128 = (1u128 << 127) - 1;

#[inline]
fn reduce(x: u128) -> u128 {
    let r = (x & P127) + (x >> 127);
    if r >= P127 {
        r - P127
    } else {
        r
    }
}

fn mul_mod(a: u128, b: u128) -> u128 {
    let (a1, a0) = (a >> 64, a & u64::MAX as u128);
    let (b1, b0) = (b >> 64, b & u64::MAX as u128);
    let mid = a1 * b0 + a0 * b1;
    let (lo, carry) = (a0 * b0).overflowing_add(mid << 64);
    let hi = a1 * b1 + (mid >> 64) + carry as u128;
    // 2^128 = 2 (mod 2^127 - 1).
    reduce(reduce(lo) + reduce(hi << 1))
}

fn pow_mod(mut base: u128, mut e: u64) -> u128 {
    let mut acc = 1u128;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        e >>= 1;
    }
    acc
}

fn to_field(v: i128) -> u128 {
    let r = v.rem_euclid(P127 as i128);
    r as u128
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Detector {
    sum: i64,
    weighted: i128,
    fingerprint: u128,
}

impl Detector {
    /// `(index, value)` if the detector verifies as exactly 1-sparse.
    fn recover(&self, z: u128, n: usize) -> Option<(u64, i64)> {
        if self.sum == 0 {
            return None;
        }
        let s = self.sum as i128;
        if self.weighted % s != 0 {
            return None;
        }
        let idx = self.weighted / s;
        if idx < 1 || idx > n as i128 {
            return None;
        }
        let expect = mul_mod(to_field(s), pow_mod(z, idx as u64));
        (expect == self.fingerprint).then_some((idx as u64, self.sum))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Config {
    pub n: usize,
    /// Target failure probability; the copy count is `ceil(log2(1/delta))`.
    pub delta: f64,
}

impl L0Config {
    pub fn new(n: usize) -> Self {
        Self { n, delta: 0.01 }
    }

    pub fn levels(&self) -> usize {
        (self.n.max(2) as f64).log2().ceil() as usize + 1
    }

    pub fn copies(&self) -> usize {
        (1.0 / self.delta).log2().ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L0Sampler {
    n: usize,
    levels: usize,
    depth_src: RandomSource,
    z: Vec<u128>,
    detectors: Vec<Detector>,
}

impl L0Sampler {
    pub fn new(cfg: L0Config, seed: u64) -> Result<Self> {
        if cfg.n == 0 {
            return Err(config("L0 sampler needs n >= 1"));
        }
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(config("L0 delta must lie in (0, 1)"));
        }
        let src = RandomSource::new(seed).stream("l0");
        let copies = cfg.copies();
        let levels = cfg.levels();
        let mut zsrc = src.stream("fingerprint");
        let z = (0..copies)
            .map(|_| {
                let w = ((zsrc.next_word() as u128) << 64) | zsrc.next_word() as u128;
                // Uniform nonzero field element (bias below 2^-126).
                1 + reduce(w) % (P127 - 1)
            })
            .collect();
        Ok(Self {
            n: cfg.n,
            levels,
            depth_src: src.stream("depth"),
            z,
            detectors: vec![Detector::default(); copies * levels],
        })
    }

    fn depth(&self, copy: usize, index: u64) -> usize {
        let w = self.depth_src.child2(copy as u64, index).next_word();
        (w.trailing_zeros() as usize).min(self.levels - 1)
    }

    pub fn add(&mut self, index: u64, delta: i64) {
        for c in 0..self.z.len() {
            let d = self.depth(c, index);
            let fp = mul_mod(to_field(delta as i128), pow_mod(self.z[c], index));
            for l in 0..=d {
                let det = &mut self.detectors[c * self.levels + l];
                det.sum += delta;
                det.weighted += index as i128 * delta as i128;
                det.fingerprint = reduce(det.fingerprint + fp);
            }
        }
    }

    pub fn sample(&self) -> SampleOutcome {
        for (c, &z) in self.z.iter().enumerate() {
            for l in 0..self.levels {
                if let Some((index, value)) = self.detectors[c * self.levels + l].recover(z, self.n)
                {
                    return SampleOutcome::Sampled { index, value: Some(value as f64) };
                }
            }
        }
        SampleOutcome::Fail
    }

    /// Linear combination: `self + other` for sketches built with the same seed.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.z != other.z || self.levels != other.levels {
            return Err(config("L0 sketches differ in seed or shape"));
        }
        for (a, b) in self.detectors.iter_mut().zip(&other.detectors) {
            a.sum += b.sum;
            a.weighted += b.weighted;
            a.fingerprint = reduce(a.fingerprint + b.fingerprint);
        }
        Ok(())
    }
}

impl Sketch for L0Sampler {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        if u.index == 0 || u.index > self.n as u64 {
            return Err(Error::IndexOutOfRange { index: u.index, n: self.n });
        }
        self.add(u.index, u.delta);
        Ok(())
    }
}

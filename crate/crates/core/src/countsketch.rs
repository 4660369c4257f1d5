//! CountSketch with Bernoulli bucket membership.
//!
//! Row `r` holds `l` buckets; key `k` joins bucket `j` independently with probability
//! `1/l` and carries one sign `g_{r,k}` per row. Memberships are regenerated on demand
//! from `(seed, row, key)` by walking geometric gaps, so no hash state is stored.
//! Single-row estimates `g_{r,k} A_{r,j}` are unbiased; the median over every bucket
//! holding `k` is the usual robust point estimate.

use std::fmt::Debug;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::error::{config, Error, Result};
use crate::random::{DiscretizationGrid, GeometricGap, RandomSource};

/// A bucket's contents.
pub trait Counter: Clone + Default + PartialEq + Debug {
    type Delta: Copy;

    fn add(&mut self, delta: Self::Delta, sign: i64);

    fn merge(&mut self, other: &Self);

    fn is_zero(&self) -> bool;
}

impl Counter for i64 {
    type Delta = i64;

    #[inline]
    fn add(&mut self, delta: i64, sign: i64) {
        *self += sign * delta;
    }

    fn merge(&mut self, other: &Self) {
        *self += other;
    }

    fn is_zero(&self) -> bool {
        *self == 0
    }
}

impl Counter for f64 {
    type Delta = f64;

    #[inline]
    fn add(&mut self, delta: f64, sign: i64) {
        *self += sign as f64 * delta;
    }

    fn merge(&mut self, other: &Self) {
        *self += other;
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// Integer combination `sum_q c_q I_q` of grid values.
///
/// Keeping exact integer coefficients per grid cell makes the table contents
/// independent of the order in which duplicates are aggregated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridCounter {
    terms: SmallVec<[(i32, i64); 4]>,
}

impl GridCounter {
    pub fn terms(&self) -> &[(i32, i64)] {
        &self.terms
    }

    pub fn value(&self, grid: &DiscretizationGrid) -> f64 {
        self.terms.iter().map(|&(q, c)| c as f64 * grid.value(q)).sum()
    }
}

impl Counter for GridCounter {
    /// `(cell, coefficient)`.
    type Delta = (i32, i64);

    fn add(&mut self, (q, c): (i32, i64), sign: i64) {
        let c = c * sign;
        if c == 0 {
            return;
        }
        match self.terms.binary_search_by_key(&q, |t| t.0) {
            Ok(pos) => {
                self.terms[pos].1 += c;
                if self.terms[pos].1 == 0 {
                    self.terms.remove(pos);
                }
            }
            Err(pos) => self.terms.insert(pos, (q, c)),
        }
    }

    fn merge(&mut self, other: &Self) {
        for &t in &other.terms {
            self.add(t, 1);
        }
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Default shape: `d = ceil(4 ln n) + 8` rows.
pub fn default_rows(n: usize) -> usize {
    (4.0 * (n.max(2) as f64).ln()).ceil() as usize + 8
}

/// Default number of single-row instances averaged by the mean estimator:
/// `max(64, ceil(log2(n)^2))`.
pub fn default_mean_instances(n: usize) -> usize {
    let lg = (n.max(2) as f64).log2();
    64usize.max((lg * lg).ceil() as usize)
}

/// How keys are assigned to buckets within a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Each bucket independently with probability `1/l` (possibly none, possibly several).
    Bernoulli,
    /// Exactly one uniform bucket per row, as in the classic CountSketch.
    Hashed,
}

/// Buckets holding one key in one row.
pub struct Placement {
    src: RandomSource,
    pos: u64,
    buckets: u64,
    gap: GeometricGap,
    hashed: Option<u64>,
    pub sign: i64,
}

impl Iterator for Placement {
    type Item = u64;

    #[inline]
    fn next(&mut self) -> Option<u64> {
        if self.pos > self.buckets {
            return None;
        }
        if let Some(b) = self.hashed {
            self.pos = self.buckets + 1;
            return Some(b);
        }
        self.pos += self.gap.sample(&mut self.src);
        if self.pos > self.buckets {
            // Park past the end so later calls stay exhausted.
            self.pos = self.buckets + 1;
            return None;
        }
        Some(self.pos - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchTable<C: Counter> {
    rows: usize,
    buckets: u64,
    seed: u64,
    membership: Membership,
    gap: GeometricGap,
    src: RandomSource,
    cells: FxHashMap<u64, C>,
}

impl<C: Counter> SketchTable<C> {
    /// Table with Bernoulli membership.
    pub fn new(rows: usize, buckets: u64, seed: u64) -> Result<Self> {
        Self::with_membership(rows, buckets, seed, Membership::Bernoulli)
    }

    pub fn with_membership(
        rows: usize,
        buckets: u64,
        seed: u64,
        membership: Membership,
    ) -> Result<Self> {
        if rows == 0 || buckets == 0 {
            return Err(config("sketch needs at least one row and one bucket"));
        }
        Ok(Self {
            rows,
            buckets,
            seed,
            membership,
            gap: GeometricGap::new(buckets),
            src: RandomSource::new(seed).stream("countsketch"),
            cells: FxHashMap::default(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn buckets(&self) -> u64 {
        self.buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn placement(&self, row: usize, key: u64) -> Placement {
        let mut src = self.src.child2(row as u64, key);
        let w = src.next_word();
        let sign = if w >> 63 == 0 { 1 } else { -1 };
        let hashed = match self.membership {
            Membership::Hashed => Some((((w << 1) as u128 * self.buckets as u128) >> 64) as u64),
            Membership::Bernoulli => None,
        };
        Placement { src, pos: 0, buckets: self.buckets, gap: self.gap, hashed, sign }
    }

    /// Adds `g_{r,key} * delta` to every bucket holding `key`. Returns buckets touched.
    pub fn update(&mut self, key: u64, delta: C::Delta) -> u64 {
        let mut touched = 0;
        for row in 0..self.rows {
            touched += self.update_row(row, key, delta);
        }
        touched
    }

    pub fn update_row(&mut self, row: usize, key: u64, delta: C::Delta) -> u64 {
        let place = self.placement(row, key);
        let sign = place.sign;
        let mut touched = 0;
        for b in place {
            self.add_at(row, b, delta, sign);
            touched += 1;
        }
        touched
    }

    /// Adds `sign * delta` to bucket `(row, bucket)` directly.
    #[inline]
    pub fn add_at(&mut self, row: usize, bucket: u64, delta: C::Delta, sign: i64) {
        let slot = row as u64 * self.buckets + bucket;
        let c = self.cells.entry(slot).or_default();
        c.add(delta, sign);
        if c.is_zero() {
            self.cells.remove(&slot);
        }
    }

    pub fn counter(&self, row: usize, bucket: u64) -> Option<&C> {
        self.cells.get(&(row as u64 * self.buckets + bucket))
    }

    /// `g_{r,key} * A_{r,j}` for every bucket `j` holding `key`, across all rows.
    pub fn estimates_by(&self, key: u64, f: impl Fn(&C) -> f64) -> Vec<f64> {
        let mut out = Vec::new();
        for row in 0..self.rows {
            let place = self.placement(row, key);
            let sign = place.sign as f64;
            for b in place {
                out.push(sign * self.counter(row, b).map_or(0.0, &f));
            }
        }
        out
    }

    /// Single-row estimate from the first bucket of `row` that holds `key`.
    pub fn row_estimate_by(&self, row: usize, key: u64, f: impl Fn(&C) -> f64) -> Option<f64> {
        let mut place = self.placement(row, key);
        let sign = place.sign as f64;
        place.next().map(|b| sign * self.counter(row, b).map_or(0.0, f))
    }

    pub fn median_by(&self, key: u64, f: impl Fn(&C) -> f64) -> Result<f64> {
        let mut est = self.estimates_by(key, f);
        if est.is_empty() {
            return Err(Error::UnhashedKey(key));
        }
        Ok(median(&mut est))
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.buckets != other.buckets || self.seed != other.seed {
            return Err(config("cannot merge sketches with different shapes or seeds"));
        }
        for (slot, c) in &other.cells {
            let mine = self.cells.entry(*slot).or_default();
            mine.merge(c);
            if mine.is_zero() {
                self.cells.remove(slot);
            }
        }
        Ok(())
    }

    /// Number of nonzero buckets.
    pub fn occupied(&self) -> usize {
        self.cells.len()
    }
}

impl SketchTable<i64> {
    pub fn estimate_median(&self, key: u64) -> Result<f64> {
        self.median_by(key, |&c| c as f64)
    }
}

impl SketchTable<f64> {
    pub fn estimate_median(&self, key: u64) -> Result<f64> {
        self.median_by(key, |&c| c)
    }
}

/// Classic CountSketch rows (one hashed bucket and one sign per row and key) with
/// dense real counters. Row `r` gives the unbiased estimate `g_{r,k} A_{r,h_r(k)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRows {
    rows: usize,
    buckets: usize,
    src: RandomSource,
    counters: Vec<f64>,
}

impl DenseRows {
    pub fn new(rows: usize, buckets: usize, seed: u64) -> Result<Self> {
        if rows == 0 || buckets == 0 {
            return Err(config("sketch needs at least one row and one bucket"));
        }
        Ok(Self {
            rows,
            buckets,
            src: RandomSource::new(seed).stream("dense-rows"),
            counters: vec![0.0; rows * buckets],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `(bucket, sign)` of `key` in each row, in row order.
    #[inline]
    fn hashes(&self, key: u64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let mut s = self.src.child(key);
        let b = self.buckets as u128;
        (0..self.rows).map(move |_| {
            let w = s.next_word();
            let sign = if w >> 63 == 0 { 1.0 } else { -1.0 };
            ((((w << 1) as u128 * b) >> 64) as usize, sign)
        })
    }

    pub fn update(&mut self, key: u64, delta: f64) {
        let mut s = self.src.child(key);
        let b = self.buckets as u128;
        for row in self.counters.chunks_exact_mut(self.buckets) {
            let w = s.next_word();
            let j = (((w << 1) as u128 * b) >> 64) as usize;
            if w >> 63 == 0 {
                row[j] += delta;
            } else {
                row[j] -= delta;
            }
        }
    }

    /// Single-row estimates of `key` for rows in `range`.
    pub fn estimates(&self, key: u64, range: std::ops::Range<usize>) -> Vec<f64> {
        self.hashes(key)
            .enumerate()
            .skip(range.start)
            .take(range.len())
            .map(|(r, (j, g))| g * self.counters[r * self.buckets + j])
            .collect()
    }
}

/// Median of a nonempty slice (mean of the two middle values for even length).
pub fn median(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty());
    let k = v.len();
    let (lower, mid, _) = v.select_nth_unstable_by(k / 2, |a, b| a.total_cmp(b));
    let mid = *mid;
    if k % 2 == 1 {
        mid
    } else {
        let below = lower.iter().copied().max_by(|a, b| a.total_cmp(b)).unwrap();
        0.5 * (below + mid)
    }
}

/// `cs_estimate_unbiased_mean`: average of independent single-row estimates.
pub fn unbiased_mean(estimates: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("no single-row estimates"));
    }
    Ok(estimates.iter().sum::<f64>() / estimates.len() as f64)
}

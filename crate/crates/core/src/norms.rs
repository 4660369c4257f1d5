//! Norm and moment estimators used to normalize acceptance probabilities.
//!
//! * [`AmsSketch`]: `F_2` by median-of-means over tug-of-war counters.
//! * [`FpSketch`]: `F_p` for `p > 2`. Coordinates are split into disjoint levels with
//!   `P[level = l] = 2^{-(l+1)}`; each level keeps an integer CountSketch that recovers
//!   its coordinates exactly. A coordinate of weight `w = |x_i|^p` in magnitude class
//!   `c` (weights in `[T 2^{-c}, T 2^{1-c})`, class 0 for `w >= T`) is counted with
//!   weight `2^c` when its level is at least `c`, which happens with probability
//!   `2^{-c}`. The threshold `T` comes from an independent `F_2` sketch, so the sum is
//!   unbiased and its variance is at most `2 T F_p`.
//! * [`GaussianL2`]: `(5/4) median_j |<phi_j, v>|` for Gaussian `phi_j`.

use serde::Serialize;

use crate::countsketch::{default_rows, SketchTable};
use crate::error::{Error, Result};
use crate::random::{standard_normal, RandomSource};
use crate::{ExactVector, Sketch, TurnstileUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateKind {
    F2TwoApprox,
    FpTwoApprox,
    FpUnbiased,
    L2Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Sketched,
    ExactOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub backend: Backend,
}

impl NormEstimate {
    /// Exact value from the mirror, for isolating sampler logic in tests.
    pub fn exact(x: &ExactVector, p: f64, kind: EstimateKind) -> Self {
        Self { value: x.moment(p), kind, backend: Backend::ExactOracle }
    }
}

fn check_key(index: u64, n: usize) -> Result<()> {
    if index == 0 || index > n as u64 {
        return Err(Error::IndexOutOfRange { index, n });
    }
    Ok(())
}

/// Tug-of-war sketch: `groups` medians of means of `per_group` squared counters.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsSketch {
    n: usize,
    groups: usize,
    per_group: usize,
    src: RandomSource,
    counters: Vec<i64>,
}

impl AmsSketch {
    pub fn new(n: usize, seed: u64) -> Self {
        let groups = (2.0 * (n.max(2) as f64).ln()).ceil() as usize + 5;
        Self::with_shape(n, groups, 64, seed)
    }

    pub fn with_shape(n: usize, groups: usize, per_group: usize, seed: u64) -> Self {
        let groups = groups.max(1);
        let per_group = per_group.max(1);
        Self {
            n,
            groups,
            per_group,
            src: RandomSource::new(seed).stream("ams"),
            counters: vec![0; groups * per_group],
        }
    }

    pub fn add(&mut self, index: u64, delta: i64) {
        // One 64-bit word supplies 64 signs for this coordinate.
        let mut s = self.src.child(index);
        let mut word = 0u64;
        for (k, c) in self.counters.iter_mut().enumerate() {
            if k % 64 == 0 {
                word = s.next_word();
            }
            if (word >> (k % 64)) & 1 == 0 {
                *c += delta;
            } else {
                *c -= delta;
            }
        }
    }

    pub fn estimate(&self) -> NormEstimate {
        let mut means: Vec<f64> = self
            .counters
            .chunks(self.per_group)
            .map(|g| g.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / self.per_group as f64)
            .collect();
        NormEstimate {
            value: crate::countsketch::median(&mut means),
            kind: EstimateKind::F2TwoApprox,
            backend: Backend::Sketched,
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.src != other.src || self.counters.len() != other.counters.len() {
            return Err(crate::error::config("AMS sketches differ in seed or shape"));
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.groups
    }
}

impl Sketch for AmsSketch {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        check_key(u.index, self.n)?;
        self.add(u.index, u.delta);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FpMode {
    /// Median of independent unbiased instances; within a factor 2 w.h.p.
    TwoApprox,
    /// `E[value] = F_p` with relative variance below 1/25.
    Unbiased,
}

const MAX_LEVEL: usize = 40;
const TWO_APPROX_INSTANCES: usize = 5;

/// Threshold scale `gamma`: `T = gamma n^{1-p/2} F2_hat^{p/2}`. Since
/// `F_p >= n^{1-p/2} F_2^{p/2}` and `F2_hat <= 2 F_2`, the relative variance is at most
/// `2 gamma 2^{p/2}`, which is below 1/25 for `p <= 4`.
const GAMMA: f64 = 0.004;

#[derive(Debug, Clone, PartialEq)]
struct LevelSketch {
    p: f64,
    n: usize,
    level_src: RandomSource,
    ams: AmsSketch,
    levels: Vec<SketchTable<i64>>,
}

impl LevelSketch {
    fn new(n: usize, p: f64, seed: u64) -> Self {
        let src = RandomSource::new(seed);
        let rows = default_rows(n);
        let buckets = (4 * n).max(16) as u64;
        let levels = (0..=MAX_LEVEL)
            .map(|l| SketchTable::new(rows, buckets, src.child2(1, l as u64).seed()).unwrap())
            .collect();
        Self {
            p,
            n,
            level_src: src.stream("level"),
            ams: AmsSketch::new(n, src.child(2).seed()),
            levels,
        }
    }

    fn level(&self, index: u64) -> usize {
        let w = self.level_src.child(index).next_word();
        (w.trailing_zeros() as usize).min(MAX_LEVEL)
    }

    fn add(&mut self, index: u64, delta: i64) {
        let l = self.level(index);
        self.levels[l].update(index, delta);
        self.ams.add(index, delta);
    }

    fn estimate(&self) -> f64 {
        let f2 = self.ams.estimate().value;
        if f2 <= 0.0 {
            return 0.0;
        }
        let p = self.p;
        let t = GAMMA * (self.n as f64).powf(1.0 - p / 2.0) * f2.powf(p / 2.0);
        let mut sum = 0.0;
        for i in 1..=self.n as u64 {
            let l = self.level(i);
            let Ok(v) = self.levels[l].estimate_median(i) else { continue };
            let v = v.round();
            if v == 0.0 {
                continue;
            }
            let w = v.abs().powf(p);
            let class = if w >= t { 0 } else { (t / w).log2().ceil() as usize };
            if class <= l {
                sum += (class as f64).exp2() * w;
            }
        }
        sum
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        self.ams.merge(&other.ams)?;
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.merge(b)?;
        }
        Ok(())
    }
}

/// `F_p` sketch for `p > 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpSketch {
    p: f64,
    n: usize,
    mode: FpMode,
    instances: Vec<LevelSketch>,
}

impl FpSketch {
    pub fn new(n: usize, p: f64, mode: FpMode, seed: u64) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::Contract(format!("F_p sketch requires p > 2, got {p}")));
        }
        let count = match mode {
            FpMode::TwoApprox => TWO_APPROX_INSTANCES,
            FpMode::Unbiased => 1,
        };
        let src = RandomSource::new(seed).stream("fp");
        let instances =
            (0..count).map(|k| LevelSketch::new(n, p, src.child(k as u64).seed())).collect();
        Ok(Self { p, n, mode, instances })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn add(&mut self, index: u64, delta: i64) {
        for inst in &mut self.instances {
            inst.add(index, delta);
        }
    }

    pub fn estimate(&self) -> NormEstimate {
        let mut vals: Vec<f64> = self.instances.iter().map(LevelSketch::estimate).collect();
        let (value, kind) = match self.mode {
            FpMode::Unbiased => (vals[0], EstimateKind::FpUnbiased),
            FpMode::TwoApprox => (crate::countsketch::median(&mut vals), EstimateKind::FpTwoApprox),
        };
        NormEstimate { value, kind, backend: Backend::Sketched }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.p != other.p || self.mode != other.mode || self.n != other.n {
            return Err(crate::error::config("F_p sketches differ in parameters"));
        }
        for (a, b) in self.instances.iter_mut().zip(&other.instances) {
            a.merge(b)?;
        }
        Ok(())
    }
}

impl Sketch for FpSketch {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        check_key(u.index, self.n)?;
        self.add(u.index, u.delta);
        Ok(())
    }
}

/// Gaussian projections of a real vector; estimates its L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianL2 {
    src: RandomSource,
    acc: Vec<f64>,
}

impl GaussianL2 {
    /// `reps` projections; the default is `ceil(16 ln n)`.
    pub fn new(reps: usize, seed: u64) -> Self {
        Self { src: RandomSource::new(seed).stream("gauss"), acc: vec![0.0; reps.max(1)] }
    }

    pub fn default_reps(n: usize) -> usize {
        (16.0 * (n.max(2) as f64).ln()).ceil() as usize
    }

    /// Adds `value * phi_{j,key}` to every projection `j`.
    pub fn add(&mut self, key: u64, value: f64) {
        let mut s = self.src.child(key);
        for a in &mut self.acc {
            *a += value * standard_normal(&mut s);
        }
    }

    /// Adds independent `N(0, scale^2)` contributions, the aggregate of many coordinates
    /// that share `key` (by 2-stability), multiplied by `delta`.
    pub fn add_aggregate(&mut self, key: u64, scale: f64, delta: f64) {
        self.add(key, scale * delta)
    }

    pub fn estimate(&self) -> NormEstimate {
        NormEstimate {
            value: l2_gaussian_estimate(&self.acc),
            kind: EstimateKind::L2Gaussian,
            backend: Backend::Sketched,
        }
    }
}

/// `(5/4) median_j |acc_j|`; lies in `[||v||/2, 2||v||]` w.h.p. since the median of a
/// half-normal is `0.6745 sigma`.
pub fn l2_gaussian_estimate(acc: &[f64]) -> f64 {
    let mut a: Vec<f64> = acc.iter().map(|v| v.abs()).collect();
    1.25 * crate::countsketch::median(&mut a)
}

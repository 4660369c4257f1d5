//! L2 sampling by exponential scaling of a duplicated vector.
//!
//! With `z_{i,k} = x_i / e_{i,k}^{1/2}` over `n^c` duplicates per coordinate, the
//! coordinate owning the largest `|z|` is distributed as `x_i^2 / F_2`. The maximum is
//! located with [`DupSketch`] and accepted only if the randomized gap test passes.
//!
//! Alongside, single-row sketches of the rank-0 scaled entries `v_i = x_i I_{q*(i)}`
//! give unbiased estimates of the sampled coordinate: `g_r A_r / I_{q*}`. Rows are
//! split into independent groups so that products and Taylor expansions of distinct
//! groups stay unbiased. A separate anchor group provides the relative estimate.

use serde::Serialize;

use crate::countsketch::{default_mean_instances, default_rows, DenseRows};
use crate::diagnostics::Diagnostics;
use crate::duplication::{DupConfig, DupSketch};
use crate::error::{config, Result};
use crate::norms::GaussianL2;
use crate::random::{standard_normal, uniform_mu, CountStrategy, RandomSource};
use crate::{ExactVector, Sketch, TurnstileUpdate};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Config {
    pub n: usize,
    /// Duplication exponent; 2 up to `n = 64`, 1 above.
    pub c: u32,
    pub eta: f64,
    /// Independent sampler instances tried in turn; `ceil(ln(1/delta))` by default.
    pub attempts: usize,
    /// Groups of single-row estimates returned with a sample.
    pub estimate_groups: usize,
    /// Rows averaged per group (`L`).
    pub mean_instances: usize,
    pub estimate_buckets: usize,
    pub stage1_rows: usize,
    pub stage2_rows: usize,
    pub stage2_buckets: u64,
    pub gap_constant: f64,
    /// Candidate threshold as a fraction of `R / ln(n^{c+1})`.
    pub candidate_fraction: f64,
}

impl L2Config {
    pub fn new(n: usize) -> Self {
        let c = if n <= 64 { 2 } else { 1 };
        Self {
            n,
            c,
            eta: 0.01,
            attempts: (1.0f64 / 0.01).ln().ceil() as usize,
            estimate_groups: 1,
            mean_instances: default_mean_instances(n),
            estimate_buckets: 64,
            stage1_rows: default_rows(n),
            stage2_rows: 9,
            stage2_buckets: 1024,
            gap_constant: 2.0,
            candidate_fraction: 1.0 / 8.0,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.attempts = (1.0 / delta).ln().ceil().max(1.0) as usize;
        self
    }

    pub fn dup_config(&self) -> DupConfig {
        let t = 2;
        DupConfig {
            n: self.n,
            p: 2.0,
            c: self.c,
            eta: self.eta,
            entries_per_index: t,
            stage1_rows: self.stage1_rows,
            stage1_buckets: (8 * t * self.n).max(64) as u64,
            stage2_rows: self.stage2_rows,
            stage2_buckets: self.stage2_buckets,
            stage2_slots: (t * self.n).min(64),
            gauss_reps: GaussianL2::default_reps(self.n),
            gap_constant: self.gap_constant,
            strategy: CountStrategy::Auto,
            cache: false,
        }
    }

    fn estimate_rows(&self) -> usize {
        (self.estimate_groups + 1) * self.mean_instances
    }
}

/// A successful L2 sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Sample {
    pub index: u64,
    /// Independent unbiased estimates of `x_index`, one per group.
    pub estimates: Vec<f64>,
    /// Estimate from the anchor group, accurate to a small relative error.
    pub relative_estimate: f64,
}

#[derive(Debug, Clone)]
struct Attempt {
    dup: DupSketch,
    rows: DenseRows,
    mu: f64,
}

#[derive(Debug, Clone)]
pub struct L2Sampler {
    cfg: L2Config,
    attempts: Vec<Attempt>,
}

impl L2Sampler {
    pub fn new(cfg: L2Config, seed: u64) -> Result<Self> {
        if cfg.n == 0 || cfg.attempts == 0 || cfg.mean_instances == 0 {
            return Err(config("L2 sampler needs n, attempts and mean instances >= 1"));
        }
        let src = RandomSource::new(seed).stream("l2");
        let dup_cfg = cfg.dup_config();
        let attempts = (0..cfg.attempts as u64)
            .map(|a| {
                let s = src.child(a);
                Ok(Attempt {
                    dup: DupSketch::new(dup_cfg.clone(), s.child(1).seed())?,
                    rows: DenseRows::new(
                        cfg.estimate_rows(),
                        cfg.estimate_buckets,
                        s.child(2).seed(),
                    )?,
                    mu: uniform_mu(&mut s.stream("mu")),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg, attempts })
    }

    pub fn config(&self) -> &L2Config {
        &self.cfg
    }

    pub fn add(&mut self, index: u64, delta: i64) -> Result<()> {
        for a in &mut self.attempts {
            if let Some(q) = a.dup.update(index, delta)? {
                let scale = a.dup.grid().value(q);
                a.rows.update(index, scale * delta as f64);
            }
        }
        Ok(())
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        for a in &self.attempts {
            d += a.dup.diagnostics();
        }
        d
    }

    fn tau(&self) -> impl Fn(f64) -> f64 {
        let frac = self.cfg.candidate_fraction;
        let ln_universe = self.cfg.dup_config().universe().ln().max(1.0);
        move |r| frac * r / ln_universe
    }

    /// First attempt whose gap test passes, with its estimates.
    pub fn sample(&self) -> Option<L2Sample> {
        let t = 2;
        let tau = self.tau();
        for a in &self.attempts {
            let q = a.dup.query(&tau, a.mu);
            if !q.passed {
                continue;
            }
            let index = q.index(t)?;
            let cell = a.dup.top_cell(index)?;
            let scale = a.dup.grid().value(cell);
            let l = self.cfg.mean_instances;
            let group = |g: usize| {
                a.rows.estimates(index, g * l..(g + 1) * l).iter().sum::<f64>() / (l as f64 * scale)
            };
            let estimates = (0..self.cfg.estimate_groups).map(group).collect();
            let relative_estimate = group(self.cfg.estimate_groups);
            return Some(L2Sample { index, estimates, relative_estimate });
        }
        None
    }
}

impl Sketch for L2Sampler {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        self.add(u.index, u.delta)
    }
}

/// Draws `i` with probability `x_i^2 / F_2` from the mirror. Estimates are
/// `x_i (1 + sigma g)` for independent standard Gaussians `g`.
pub fn l2_oracle_sample(
    x: &ExactVector,
    sigma: f64,
    groups: usize,
    src: &mut RandomSource,
) -> Option<L2Sample> {
    let f2 = x.moment(2.0);
    if f2 == 0.0 {
        return None;
    }
    let target = src.unit() * f2;
    let mut acc = 0.0;
    let mut index = x.n() as u64;
    for i in 1..=x.n() as u64 {
        acc += (x.get(i) as f64).powi(2);
        if target < acc {
            index = i;
            break;
        }
    }
    let xi = x.get(index) as f64;
    let mut draw = || {
        if sigma == 0.0 {
            xi
        } else {
            xi * (1.0 + sigma * standard_normal(src))
        }
    };
    let estimates = (0..groups).map(|_| draw()).collect();
    let relative_estimate = draw();
    Some(L2Sample { index, estimates, relative_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_sparse_always_found() {
        for seed in 0..20 {
            let mut s = L2Sampler::new(L2Config::new(8), seed).unwrap();
            s.add(3, -6).unwrap();
            let out = s.sample().expect("1-sparse sample");
            assert_eq!(out.index, 3);
            assert!((out.relative_estimate + 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_vector_fails() {
        let s = L2Sampler::new(L2Config::new(8), 1).unwrap();
        assert!(s.sample().is_none());
    }

    #[test]
    fn oracle_noiseless() {
        let x = ExactVector::from_values(vec![2, 1]).unwrap();
        let mut src = RandomSource::new(4);
        let mut ones = 0;
        for _ in 0..10_000 {
            let s = l2_oracle_sample(&x, 0.0, 2, &mut src).unwrap();
            assert_eq!(s.estimates, vec![x.get(s.index) as f64; 2]);
            ones += (s.index == 1) as u32;
        }
        assert!((ones as f64 / 1e4 - 0.8).abs() < 0.015);
    }
}

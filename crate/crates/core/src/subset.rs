//! Moment of a query subset `Q` revealed after the stream.
//!
//! Each of `R` repetitions stores a sampled index `i_r` (L_p law) and an independent
//! unbiased estimate `C_r` of `F_p`. For a query set `Q`,
//! `Z = (1/R) sum_{r : i_r in Q} C_r`, whose mean is `||x_Q||_p^p` up to the sampler's
//! distortion. The relative variance of `Z` is about `(1 + v) / (beta R)` where
//! `beta = ||x_Q||_p^p / F_p >= alpha` and `v` is the relative variance of `C_r`.

use serde::Serialize;

use crate::approx::{ApproxConfig, ApproxSampler};
use crate::diagnostics::Diagnostics;
use crate::error::{config, Error, Result};
use crate::norms::{FpMode, FpSketch};
use crate::perfect::{PerfectConfig, PerfectLpSampler};
use crate::random::RandomSource;
use crate::{QuerySet, Sketch, TurnstileUpdate};

/// Default `c_Z` in `R = ceil(c_Z / (alpha eps^2))`.
///
/// With relative variance below 1/25 per `C_r`, `Var(Z) <= 1.04 F_p ||x_Q||_p^p / R`,
/// so `c_Z = 4` keeps `Z` within `eps` with probability above 0.95 for any
/// `beta >= alpha` (normal approximation).
pub const DEFAULT_C_Z: f64 = 4.0;

/// FAIL fraction above which a result is flagged low-confidence.
pub const LOW_CONFIDENCE_FAIL_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetBackend {
    Perfect,
    /// One-pass approximate sampler at distortion `eps / 4`.
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetConfig {
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    pub alpha: f64,
    pub c_z: f64,
    pub backend: SubsetBackend,
    /// Instances per approximate sampler; unused by the perfect backend.
    pub approx_instances: usize,
}

impl SubsetConfig {
    pub fn new(n: usize, p: f64, eps: f64, alpha: f64) -> Self {
        Self {
            n,
            p,
            eps,
            alpha,
            c_z: DEFAULT_C_Z,
            backend: SubsetBackend::Perfect,
            approx_instances: 8,
        }
    }

    pub fn repetitions(&self) -> usize {
        (self.c_z / (self.alpha * self.eps * self.eps)).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config("n must be positive"));
        }
        if !(self.p > 2.0) {
            return Err(config(format!("subset estimation needs p > 2, got {}", self.p)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(config(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.c_z > 0.0) {
            return Err(config("c_Z must be positive"));
        }
        Ok(())
    }

    pub fn perfect_config(&self) -> PerfectConfig {
        PerfectConfig::new(self.n, self.p)
    }

    pub fn approx_config(&self) -> ApproxConfig {
        let mut c = ApproxConfig::new(self.n, self.p, self.eps / 4.0);
        c.instances = self.approx_instances;
        c
    }
}

/// What one repetition keeps after the stream: `(i_r, C_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Repetition {
    /// `None` when the sampler FAILed.
    pub index: Option<u64>,
    pub fp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetEstimate {
    pub z: f64,
    pub repetitions: usize,
    /// Repetitions whose index landed in the query set.
    pub hits: usize,
    pub fails: usize,
    pub low_confidence: bool,
}

/// Finalized state: the stored pairs, queried any number of times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetState {
    pub config: SubsetConfig,
    pub pairs: Vec<Repetition>,
    pub diag: Diagnostics,
}

impl SubsetState {
    /// Same pairs as streaming `updates` into [`SubsetEstimator::new`] and finishing,
    /// with one repetition's sketches alive at a time.
    pub fn from_stream(cfg: &SubsetConfig, seed: u64, updates: &[TurnstileUpdate]) -> Result<Self> {
        cfg.validate()?;
        let src = RandomSource::new(seed).stream("subset");
        let pcfg = cfg.perfect_config();
        let acfg = cfg.approx_config();
        let mut diag = Diagnostics::default();
        let mut pairs = Vec::with_capacity(cfg.repetitions());
        for r in 0..cfg.repetitions() {
            let mut fp = fp_sketch(cfg, &src, r)?;
            fp.ingest(updates)?;
            let index = match cfg.backend {
                SubsetBackend::Perfect => {
                    let d = PerfectLpSampler::sample_stream(&pcfg, sampler_seed(&src, r), updates)?;
                    diag += d.diag;
                    d.outcome.index()
                }
                SubsetBackend::Approx => {
                    let mut s = ApproxSampler::new(acfg.clone(), sampler_seed(&src, r))?;
                    s.ingest(updates)?;
                    let d = s.sample();
                    diag += d.diag;
                    d.outcome.index()
                }
            };
            pairs.push(Repetition { index, fp: fp.estimate().value });
        }
        Ok(Self { config: cfg.clone(), pairs, diag })
    }

    pub fn fails(&self) -> usize {
        self.pairs.iter().filter(|r| r.index.is_none()).count()
    }

    pub fn query(&self, q: &QuerySet) -> SubsetEstimate {
        let repetitions = self.pairs.len();
        let mut sum = 0.0;
        let mut hits = 0;
        for r in &self.pairs {
            if r.index.is_some_and(|i| q.contains(i)) {
                sum += r.fp;
                hits += 1;
            }
        }
        let fails = self.fails();
        SubsetEstimate {
            z: if repetitions == 0 { 0.0 } else { sum / repetitions as f64 },
            repetitions,
            hits,
            fails,
            low_confidence: fails as f64 > LOW_CONFIDENCE_FAIL_RATE * repetitions as f64,
        }
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Perfect(PerfectLpSampler),
    Approx(ApproxSampler),
}

/// Streaming form: all `R` repetitions are updated together.
#[derive(Debug, Clone)]
pub struct SubsetEstimator {
    cfg: SubsetConfig,
    reps: Vec<(Sampler, FpSketch)>,
}

impl SubsetEstimator {
    pub fn new(cfg: SubsetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let src = RandomSource::new(seed).stream("subset");
        let reps = (0..cfg.repetitions())
            .map(|r| {
                let s = match cfg.backend {
                    SubsetBackend::Perfect => Sampler::Perfect(PerfectLpSampler::new(
                        cfg.perfect_config(),
                        sampler_seed(&src, r),
                    )?),
                    SubsetBackend::Approx => Sampler::Approx(ApproxSampler::new(
                        cfg.approx_config(),
                        sampler_seed(&src, r),
                    )?),
                };
                Ok((s, fp_sketch(&cfg, &src, r)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg, reps })
    }

    pub fn add(&mut self, index: u64, delta: i64) -> Result<()> {
        if index == 0 || index > self.cfg.n as u64 {
            return Err(Error::IndexOutOfRange { index, n: self.cfg.n });
        }
        for (s, fp) in &mut self.reps {
            match s {
                Sampler::Perfect(s) => s.add(index, delta)?,
                Sampler::Approx(s) => s.add(index, delta)?,
            }
            fp.add(index, delta);
        }
        Ok(())
    }

    /// Draws every repetition's sample; the stream is over after this.
    pub fn finish(self) -> Result<SubsetState> {
        let mut diag = Diagnostics::default();
        let mut pairs = Vec::with_capacity(self.reps.len());
        for (s, fp) in &self.reps {
            let index = match s {
                Sampler::Perfect(s) => {
                    let d = s.sample()?;
                    diag += d.diag;
                    d.outcome.index()
                }
                Sampler::Approx(s) => {
                    let d = s.sample();
                    diag += d.diag;
                    d.outcome.index()
                }
            };
            pairs.push(Repetition { index, fp: fp.estimate().value });
        }
        Ok(SubsetState { config: self.cfg, pairs, diag })
    }
}

impl Sketch for SubsetEstimator {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        self.add(u.index, u.delta)
    }
}

fn sampler_seed(src: &RandomSource, r: usize) -> u64 {
    src.stream("sampler").child(r as u64).seed()
}

fn fp_sketch(cfg: &SubsetConfig, src: &RandomSource, r: usize) -> Result<FpSketch> {
    FpSketch::new(cfg.n, cfg.p, FpMode::Unbiased, src.stream("fp").child(r as u64).seed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Stream;

    fn small() -> SubsetConfig {
        SubsetConfig::new(4, 3.0, 0.5, 1.0)
    }

    #[test]
    fn repetition_count() {
        let c = SubsetConfig::new(16, 3.0, 0.2, 0.25);
        assert_eq!(c.repetitions(), 400);
        assert!(SubsetConfig::new(16, 2.0, 0.2, 0.25).validate().is_err());
        assert!(SubsetConfig::new(16, 3.0, 0.2, 0.0).validate().is_err());
    }

    #[test]
    fn empty_query_and_zero_stream() {
        let st = SubsetState::from_stream(&small(), 3, &[]).unwrap();
        assert_eq!(st.fails(), st.pairs.len());
        assert!(st.query(&QuerySet::new(1..=4)).low_confidence);
        let x = Stream::from_values(&[3, -1, 2, 5]).unwrap();
        let st = SubsetState::from_stream(&small(), 3, &x.updates).unwrap();
        assert_eq!(st.query(&QuerySet::default()).z, 0.0);
    }

    #[test]
    fn lazy_matches_streaming() {
        let x = Stream::from_values(&[3, -1, 2, 5]).unwrap();
        let mut e = SubsetEstimator::new(small(), 9).unwrap();
        e.ingest(&x.updates).unwrap();
        let a = e.finish().unwrap();
        let b = SubsetState::from_stream(&small(), 9, &x.updates).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn queries_split_the_full_sum() {
        let x = Stream::from_values(&[3, -1, 2, 5]).unwrap();
        let st = SubsetState::from_stream(&small(), 1, &x.updates).unwrap();
        let all = st.query(&QuerySet::new(1..=4)).z;
        let parts = st.query(&QuerySet::new([1, 2])).z + st.query(&QuerySet::new([3, 4])).z;
        assert!((all - parts).abs() <= 1e-9 * all.abs());
    }
}

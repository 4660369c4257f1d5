//! Trial harness: runs independent sampler instances over a stored stream and compares
//! the empirical law against the exact one computed from the mirror.
//!
//! Trial `t` is seeded from `(seed, t)` alone and results are consumed in trial order,
//! so a summary does not depend on the number of workers.

use std::time::Instant;

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::approx::{ApproxConfig, ApproxSampler, UpdatePath};
use crate::diagnostics::Diagnostics;
use crate::error::{config, Error, Result};
use crate::gsampler::{GSampler, RejectionPlan, DEFAULT_REPETITION_CONSTANT};
use crate::l0::{L0Config, L0Sampler};
use crate::perfect::{PerfectConfig, PerfectLpSampler, PolyConfig, PolynomialSampler, Route};
use crate::random::RandomSource;
use crate::{exact_g_distribution, Draw, ExactVector, GFunction, Sketch, Stream, StreamHeader};

/// Sampler selection shared by the CLI and the test suites.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplerSpec {
    L0,
    /// Perfect L_p sampler.
    Lp {
        p: f64,
        route: Route,
    },
    Polynomial {
        terms: Vec<(f64, f64)>,
        bound: f64,
    },
    Approx {
        p: f64,
        eps: f64,
        instances: usize,
        path: UpdatePath,
    },
    Log {
        c_g: f64,
    },
    Cap {
        threshold: f64,
        p: f64,
        c_g: f64,
    },
}

impl SamplerSpec {
    pub fn lp(p: f64) -> Self {
        SamplerSpec::Lp { p, route: Route::Auto }
    }

    pub fn log() -> Self {
        SamplerSpec::Log { c_g: DEFAULT_REPETITION_CONSTANT }
    }

    pub fn cap(threshold: f64, p: f64) -> Self {
        SamplerSpec::Cap { threshold, p, c_g: DEFAULT_REPETITION_CONSTANT }
    }

    pub fn id(&self) -> &'static str {
        match self {
            SamplerSpec::L0 => "l0",
            SamplerSpec::Lp { .. } => "lp",
            SamplerSpec::Polynomial { .. } => "poly",
            SamplerSpec::Approx { .. } => "approx",
            SamplerSpec::Log { .. } => "log",
            SamplerSpec::Cap { .. } => "cap",
        }
    }

    /// Target weight; `None` for L0, whose target is uniform on the support.
    pub fn target(&self) -> Option<GFunction> {
        match self {
            SamplerSpec::L0 => None,
            SamplerSpec::Lp { p, .. } | SamplerSpec::Approx { p, .. } => {
                Some(GFunction::Power { p: *p })
            }
            SamplerSpec::Polynomial { terms, bound } => {
                Some(GFunction::Polynomial { terms: terms.clone(), bound: *bound })
            }
            SamplerSpec::Log { .. } => Some(GFunction::Log),
            SamplerSpec::Cap { threshold, p, .. } => {
                Some(GFunction::Cap { threshold: *threshold, p: *p })
            }
        }
    }

    pub fn exact_distribution(&self, x: &ExactVector) -> Result<Vec<f64>> {
        match self.target() {
            Some(g) => exact_g_distribution(x, &g),
            None => {
                let support = x.support();
                if support.is_empty() {
                    return Err(Error::Degenerate("all-zero vector"));
                }
                let w = 1.0 / support.len() as f64;
                let mut d = vec![0.0; x.n()];
                for i in support {
                    d[i as usize - 1] = w;
                }
                Ok(d)
            }
        }
    }

    /// Resolves the configuration for a stream with this header.
    pub fn prepare(&self, header: &StreamHeader) -> Result<Prepared> {
        let n = header.n;
        Ok(match self {
            SamplerSpec::L0 => Prepared::L0(L0Config::new(n)),
            SamplerSpec::Lp { p, route } => {
                let mut c = PerfectConfig::new(n, *p);
                c.route = *route;
                c.validate()?;
                Prepared::Lp(c)
            }
            SamplerSpec::Polynomial { .. } => {
                Prepared::Poly(PolyConfig::new(n, &self.target().expect("polynomial"))?)
            }
            SamplerSpec::Approx { p, eps, instances, path } => {
                let mut c = ApproxConfig::new(n, *p, *eps);
                c.instances = *instances;
                c.path = *path;
                c.validate()?;
                Prepared::Approx(c)
            }
            SamplerSpec::Log { c_g } => {
                Prepared::G(RejectionPlan::log(header.magnitude_bound(), *c_g)?, n)
            }
            SamplerSpec::Cap { threshold, p, c_g } => {
                Prepared::G(RejectionPlan::cap(*threshold, *p, *c_g)?, n)
            }
        })
    }
}

/// A sampler configuration resolved against a stream header.
#[derive(Debug, Clone)]
pub enum Prepared {
    L0(L0Config),
    Lp(PerfectConfig),
    Poly(PolyConfig),
    Approx(ApproxConfig),
    G(RejectionPlan, usize),
}

impl Prepared {
    /// One independent sampler instance over `stream`, lazily where the sampler allows.
    pub fn draw(&self, stream: &Stream, seed: u64) -> Result<Draw> {
        let updates = &stream.updates;
        Ok(match self {
            Prepared::L0(c) => {
                let mut s = L0Sampler::new(*c, seed)?;
                s.ingest(updates)?;
                Draw { outcome: s.sample(), diag: Diagnostics::default() }
            }
            Prepared::Lp(c) => {
                let d = PerfectLpSampler::sample_stream(c, seed, updates)?;
                Draw { outcome: d.outcome, diag: d.diag }
            }
            Prepared::Poly(c) => {
                let d = PolynomialSampler::sample_stream(c, seed, updates)?;
                Draw { outcome: d.outcome, diag: d.diag }
            }
            Prepared::Approx(c) => {
                let mut s = ApproxSampler::new(c.clone(), seed)?;
                s.ingest(updates)?;
                s.sample().into()
            }
            Prepared::G(plan, n) => GSampler::sample_stream(plan, *n, seed, updates)?,
        })
    }

    /// The streaming form, for timing updates.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Sketch>> {
        Ok(match self {
            Prepared::L0(c) => Box::new(L0Sampler::new(*c, seed)?),
            Prepared::Lp(c) => Box::new(PerfectLpSampler::new(c.clone(), seed)?),
            Prepared::Poly(c) => Box::new(PolynomialSampler::new(c.clone(), seed)?),
            Prepared::Approx(c) => Box::new(ApproxSampler::new(c.clone(), seed)?),
            Prepared::G(plan, n) => Box::new(GSampler::new(plan.clone(), *n, seed)?),
        })
    }
}

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    RandomSource::new(seed).stream("trial").child(trial).seed()
}

/// Checks of returned values against the mirror.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ValueCheck {
    pub checked: u64,
    pub exact: u64,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: u64,
    pub successes: u64,
    pub fails: u64,
    /// Successes per coordinate, 0-based.
    pub counts: Vec<u64>,
    pub diag: Diagnostics,
    pub values: ValueCheck,
}

impl TrialSummary {
    fn new(n: usize) -> Self {
        Self {
            trials: 0,
            successes: 0,
            fails: 0,
            counts: vec![0; n],
            diag: Diagnostics::default(),
            values: ValueCheck::default(),
        }
    }

    fn record(&mut self, d: &Draw, x: &ExactVector) {
        self.trials += 1;
        self.diag += d.diag;
        let Some(i) = d.outcome.index() else {
            self.fails += 1;
            return;
        };
        self.successes += 1;
        self.counts[i as usize - 1] += 1;
        if let Some(v) = d.outcome.value() {
            let truth = x.get(i) as f64;
            self.values.checked += 1;
            self.values.exact += (v == truth) as u64;
            let rel = if truth == 0.0 { f64::INFINITY } else { ((v - truth) / truth).abs() };
            self.values.max_relative_error = self.values.max_relative_error.max(rel);
        }
    }

    pub fn empirical(&self) -> Vec<f64> {
        let s = self.successes.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / s).collect()
    }

    pub fn fail_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.fails as f64 / self.trials as f64
        }
    }
}

/// When to stop drawing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopRule {
    Trials(u64),
    /// Stop at this many successes, or give up after `max_trials`.
    Successes {
        target: u64,
        max_trials: u64,
    },
}

/// Runs trials `0, 1, ...` with `workers` threads until the stop rule is met.
pub fn run_trials(
    prep: &Prepared,
    stream: &Stream,
    seed: u64,
    stop: StopRule,
    workers: usize,
) -> Result<TrialSummary> {
    if workers == 0 {
        return Err(config("need at least one worker"));
    }
    let x = stream.mirror()?;
    let (target, max_trials) = match stop {
        StopRule::Trials(t) => (u64::MAX, t),
        StopRule::Successes { target, max_trials } => (target, max_trials),
    };
    let mut summary = TrialSummary::new(stream.n());
    let batch = 16 * workers as u64;
    let mut next = 0u64;
    while next < max_trials && summary.successes < target {
        let end = (next + batch).min(max_trials);
        for d in draw_range(prep, stream, seed, next..end, workers)? {
            summary.record(&d, &x);
            if summary.successes >= target {
                break;
            }
        }
        next = end;
    }
    Ok(summary)
}

fn draw_range(
    prep: &Prepared,
    stream: &Stream,
    seed: u64,
    ids: std::ops::Range<u64>,
    workers: usize,
) -> Result<Vec<Draw>> {
    let len = (ids.end - ids.start) as usize;
    if workers == 1 || len == 1 {
        return ids.map(|t| prep.draw(stream, trial_seed(seed, t))).collect();
    }
    let mut slots: Vec<Option<Result<Draw>>> = (0..len).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let ids = ids.clone();
                s.spawn(move || {
                    ids.skip(w)
                        .step_by(workers)
                        .map(|t| (t, prep.draw(stream, trial_seed(seed, t))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (t, d) in h.join().expect("trial worker panicked") {
                slots[(t - ids.start) as usize] = Some(d);
            }
        }
    });
    slots.into_iter().map(|d| d.expect("every trial ran")).collect()
}

/// Per-update wall-clock statistics of the streaming form, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateTiming {
    pub updates: u64,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub max_ns: f64,
}

pub fn time_updates(prep: &Prepared, stream: &Stream, seed: u64) -> Result<UpdateTiming> {
    let mut s = prep.build(seed)?;
    let mut ns = Vec::with_capacity(stream.updates.len());
    for u in &stream.updates {
        let t = Instant::now();
        s.update(u)?;
        ns.push(t.elapsed().as_nanos() as f64);
    }
    if ns.is_empty() {
        return Ok(UpdateTiming { updates: 0, mean_ns: 0.0, median_ns: 0.0, max_ns: 0.0 });
    }
    let mean_ns = ns.iter().sum::<f64>() / ns.len() as f64;
    let max_ns = ns.iter().copied().fold(0.0, f64::max);
    let median_ns = crate::countsketch::median(&mut ns);
    Ok(UpdateTiming { updates: stream.updates.len() as u64, mean_ns, median_ns, max_ns })
}

/// Fast versus materializing update paths of one duplication sketch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateBench {
    pub n: usize,
    pub c: u32,
    pub copies: u64,
    pub grid_cells: usize,
    pub stage2_rows: usize,
    pub updates: u64,
    pub naive_ops: u64,
    pub fast_ops: u64,
    /// `naive_ops / fast_ops`.
    pub ratio: f64,
    /// `n^c / (grid cells * stage-2 rows)`.
    pub predicted: f64,
    /// Wall-clock nanoseconds per update, fast and naive.
    #[serde(skip)]
    pub fast_ns: f64,
    #[serde(skip)]
    pub naive_ns: f64,
}

/// Feeds `stream` through two copies of the approximate sampler's duplication sketch
/// (duplication exponent `c`), one per update path. The fast path counts duplicates
/// per grid cell with conditional binomials.
pub fn bench_update(p: f64, eps: f64, c: u32, stream: &Stream, seed: u64) -> Result<UpdateBench> {
    let mut cfg = ApproxConfig::new(stream.n(), p, eps);
    cfg.c = c;
    let mut dup = cfg.dup_config();
    dup.strategy = crate::random::CountStrategy::Multinomial;
    let mut fast = crate::duplication::DupSketch::new(dup.clone(), seed)?;
    let mut naive = crate::duplication::DupSketch::new(dup.clone(), seed)?;
    let t = Instant::now();
    for u in &stream.updates {
        fast.update(u.index, u.delta)?;
    }
    let fast_ns = t.elapsed().as_nanos() as f64;
    let t = Instant::now();
    for u in &stream.updates {
        naive.update_naive(u.index, u.delta)?;
    }
    let naive_ns = t.elapsed().as_nanos() as f64;
    let m = stream.updates.len().max(1) as f64;
    let naive_ops = naive.diagnostics().update_ops;
    let fast_ops = fast.diagnostics().update_ops;
    let grid_cells = fast.grid().cells();
    Ok(UpdateBench {
        n: stream.n(),
        c,
        copies: dup.copies(),
        grid_cells,
        stage2_rows: dup.stage2_rows,
        updates: stream.updates.len() as u64,
        naive_ops,
        fast_ops,
        ratio: naive_ops as f64 / fast_ops.max(1) as f64,
        predicted: dup.copies() as f64 / (grid_cells * dup.stage2_rows) as f64,
        fast_ns: fast_ns / m,
        naive_ns: naive_ns / m,
    })
}

/// Coordinate maximizing `|x_i| / e_i^{1/p}` for fresh exponentials `e_i`, computed
/// directly on the values with unclipped exponentials. Its law is `|x_i|^p / F_p`.
pub fn exponential_argmax(values: &[i64], p: f64, src: &mut RandomSource) -> Option<u64> {
    let mut best: Option<(u64, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        let e: f64 = Exp1.sample(src);
        if v == 0 {
            continue;
        }
        let score = (v.unsigned_abs() as f64).ln() - e.ln() / p;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((k as u64 + 1, score));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workers_do_not_change_results() {
        let stream = Stream::from_values(&[4, -2, 0, 7, 1]).unwrap();
        let prep = SamplerSpec::log().prepare(&stream.header).unwrap();
        let stop = StopRule::Successes { target: 30, max_trials: 100 };
        let a = run_trials(&prep, &stream, 5, stop, 1).unwrap();
        let b = run_trials(&prep, &stream, 5, stop, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.successes, 30);
        assert_eq!(a.values.exact, a.values.checked);
    }

    #[test]
    fn l0_target_is_uniform_on_support() {
        let x = ExactVector::from_values(vec![0, 5, -1, 0]).unwrap();
        assert_eq!(SamplerSpec::L0.exact_distribution(&x).unwrap(), vec![0.0, 0.5, 0.5, 0.0]);
        let z = ExactVector::new(3).unwrap();
        assert!(SamplerSpec::L0.exact_distribution(&z).is_err());
    }

    #[test]
    fn argmax_skips_zeros() {
        let mut src = RandomSource::new(1);
        for _ in 0..100 {
            let i = exponential_argmax(&[0, 3, 0], 2.0, &mut src).unwrap();
            assert_eq!(i, 2);
        }
        assert_eq!(exponential_argmax(&[0, 0], 2.0, &mut src), None);
    }
}

//! Perfect L_p samplers for `p > 2` and perfect polynomial samplers, by rejection
//! over perfect L2 samples.
//!
//! An L2 sample `j` arrives with probability `x_j^2 / F_2`. Keeping it with probability
//! proportional to an unbiased estimate of `|x_j|^{p-2}` leaves `|x_j|^p / F_p` as the law
//! of the first kept sample. For integer `p` the estimate is a product of `p - 2`
//! independent estimates of `x_j`; for fractional `p` it is a truncated Taylor series
//! around an anchor `y_j ~ x_j`. Polynomial weights add one more rejection layer over
//! perfect L_p samples with `p` the top degree.
//!
//! Every sampler has a streaming form (all inner sketches live through the stream) and
//! a lazy form that replays a stored stream into one inner sketch at a time and stops at
//! the first acceptance. Seeds are derived per inner instance, so both forms return the
//! same outcome.

use serde::Serialize;

use crate::diagnostics::Diagnostics;
use crate::error::{config, Error, Result};
use crate::l2::{L2Config, L2Sample, L2Sampler};
use crate::norms::{AmsSketch, FpMode, FpSketch};
use crate::random::RandomSource;
use crate::{GFunction, SampleOutcome, Sketch, TurnstileUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Integer path for integer `p`, fractional otherwise.
    #[default]
    Auto,
    Integer,
    Fractional,
}

/// Where the Taylor expansion is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    /// At the anchor estimate itself.
    #[default]
    ConstantBand,
    /// Estimates and anchor divided by `e^p ln n`, result multiplied back by `(e^p ln n)^r`.
    ScaledDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
enum Path {
    /// `p = 2`: the L2 sample is returned as is.
    Direct,
    Integer(usize),
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfectConfig {
    pub n: usize,
    pub p: f64,
    pub delta: f64,
    pub route: Route,
    pub anchor: AnchorMode,
    /// Integer path: `N = ceil(c n^{1-2/p} ln(1/delta))`.
    pub repetition_constant: f64,
    /// Fractional path: `N' = s n^{1-2/p}`.
    pub fractional_scale: f64,
    /// Fractional path: `N = ceil(N' ceil(c_R ln n))`.
    pub log_repetitions: f64,
    /// `Q_T = ceil(c_T ln n)`.
    pub taylor_constant: f64,
    /// Estimate groups carried beyond those the acceptance step uses.
    pub extra_groups: usize,
    pub l2: L2Config,
}

impl PerfectConfig {
    pub fn new(n: usize, p: f64) -> Self {
        let mut l2 = L2Config::new(n);
        if p > 2.0 {
            l2.attempts = 1;
        }
        Self {
            n,
            p,
            delta: 0.01,
            route: Route::Auto,
            anchor: AnchorMode::ConstantBand,
            repetition_constant: 16.0,
            fractional_scale: 1.0,
            log_repetitions: 12.0,
            taylor_constant: 3.0,
            extra_groups: 0,
            l2,
        }
    }

    fn ln_n(&self) -> f64 {
        (self.n.max(2) as f64).ln()
    }

    pub fn taylor_depth(&self) -> usize {
        ((self.taylor_constant * self.ln_n()).ceil() as usize).max(1)
    }

    fn path(&self) -> Result<Path> {
        let p = self.p;
        let integral = p.fract() == 0.0;
        if p == 2.0 {
            return Ok(Path::Direct);
        }
        if !(p > 2.0) || !p.is_finite() {
            return Err(config(format!("perfect sampler needs p >= 2, got {p}")));
        }
        match self.route {
            Route::Auto if integral => Ok(Path::Integer(p as usize - 2)),
            Route::Integer if integral => Ok(Path::Integer(p as usize - 2)),
            Route::Integer => Err(config("integer route needs an integer p")),
            _ => Ok(Path::Fractional),
        }
    }

    fn spread(&self) -> f64 {
        (self.n as f64).powf(1.0 - 2.0 / self.p)
    }

    fn fractional_prime(&self) -> f64 {
        self.fractional_scale * self.spread()
    }

    /// Number of inner L2 samples.
    pub fn repetitions(&self) -> Result<usize> {
        Ok(match self.path()? {
            Path::Direct => 1,
            Path::Integer(_) => {
                (self.repetition_constant * self.spread() * (1.0 / self.delta).ln()).ceil() as usize
            }
            Path::Fractional => {
                let logs = (self.log_repetitions * self.ln_n()).ceil();
                (self.fractional_prime() * logs).ceil() as usize
            }
        }
        .max(1))
    }

    /// Estimate groups used by the acceptance step.
    fn used_groups(&self) -> Result<usize> {
        Ok(match self.path()? {
            Path::Direct => 0,
            Path::Integer(k) => k,
            Path::Fractional => self.taylor_depth(),
        })
    }

    pub fn l2_config(&self) -> Result<L2Config> {
        let mut l2 = self.l2.clone();
        l2.n = self.n;
        l2.estimate_groups = (self.used_groups()? + self.extra_groups).max(1);
        Ok(l2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config("n must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config("delta must lie in (0, 1)"));
        }
        if !(self.repetition_constant > 0.0
            && self.fractional_scale > 0.0
            && self.log_repetitions > 0.0
            && self.taylor_constant > 0.0)
        {
            return Err(config("repetition and Taylor constants must be positive"));
        }
        self.path()?;
        Ok(())
    }

    /// Probability of keeping an L2 sample given norm estimates.
    pub fn acceptance(&self, s: &L2Sample, norms: Norms) -> Result<f64> {
        let ratio = norms.f2 / norms.fp;
        Ok(match self.path()? {
            Path::Direct => 1.0,
            Path::Integer(k) => {
                let prod: f64 = s.estimates[..k].iter().map(|e| e.abs()).product();
                ratio / (8.0 * self.spread()) * prod
            }
            Path::Fractional => {
                let q = self.taylor_depth();
                let t =
                    self.power_estimate(&s.estimates[..q], s.relative_estimate, self.p - 2.0)?;
                ratio / (4.0 * self.fractional_prime()) * t.abs()
            }
        })
    }

    /// Estimate groups left over for a caller (the polynomial layer).
    pub fn spare_groups<'a>(&self, s: &'a L2Sample) -> Result<&'a [f64]> {
        let used = self.used_groups()?;
        Ok(&s.estimates[used..used + self.extra_groups])
    }

    /// Unbiased estimate of `|x|^r` from independent unbiased estimates of `x` and a
    /// relative estimate whose sign is taken as the sign of `x`.
    pub fn power_estimate(&self, estimates: &[f64], relative: f64, r: f64) -> Result<f64> {
        let s = relative.signum();
        let y = relative.abs();
        match self.anchor {
            AnchorMode::ConstantBand => {
                let e: Vec<f64> = estimates.iter().map(|v| s * v).collect();
                taylor_estimate_power(&e, y, r)
            }
            AnchorMode::ScaledDown => {
                let scale = self.p.exp() * self.ln_n();
                let e: Vec<f64> = estimates.iter().map(|v| s * v / scale).collect();
                Ok(taylor_estimate_power(&e, y / scale, r)? * scale.powf(r))
            }
        }
    }
}

/// `sum_{q=0}^{Q} binom(r, q) y^{r-q} prod_{a<q} (e_a - y)` with `Q = estimates.len()`.
///
/// With independent unbiased `e_a` its expectation is the order-`Q` Taylor polynomial of
/// `x^r` around `y`.
pub fn taylor_estimate_power(estimates: &[f64], anchor: f64, r: f64) -> Result<f64> {
    let integral = r.fract() == 0.0 && r >= 0.0;
    if !(anchor > 0.0) && !integral {
        return Err(Error::Domain(format!("anchor {anchor} must be positive for exponent {r}")));
    }
    if !anchor.is_finite() || estimates.iter().any(|e| !e.is_finite()) {
        return Err(Error::Domain("non-finite Taylor input".into()));
    }
    let pow = |k: f64| if integral { anchor.powi(k as i32) } else { anchor.powf(k) };
    let mut total = pow(r);
    let mut binom = 1.0;
    let mut prod = 1.0;
    for (q, e) in estimates.iter().enumerate() {
        let q = q as f64 + 1.0;
        binom *= (r - q + 1.0) / q;
        if binom == 0.0 {
            break;
        }
        prod *= e - anchor;
        total += binom * pow(r - q) * prod;
    }
    Ok(total)
}

/// Norm estimates that normalize acceptance probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub f2: f64,
    pub fp: f64,
}

impl Norms {
    pub fn exact(x: &crate::ExactVector, p: f64) -> Self {
        Self { f2: x.moment(2.0), fp: x.moment(p) }
    }

    fn usable(&self) -> bool {
        self.f2 > 0.0 && self.fp > 0.0 && self.f2.is_finite() && self.fp.is_finite()
    }
}

/// Outcome of a perfect sampler together with the L2 sample that was kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfectDraw {
    pub outcome: SampleOutcome,
    pub sample: Option<L2Sample>,
    pub diag: Diagnostics,
}

impl PerfectDraw {
    fn new(sample: Option<L2Sample>, diag: Diagnostics) -> Self {
        let outcome = match &sample {
            Some(s) => SampleOutcome::Sampled { index: s.index, value: Some(s.relative_estimate) },
            None => SampleOutcome::Fail,
        };
        Self { outcome, sample, diag }
    }
}

/// Keeps the first L2 sample that passes its coin. `None` items are inner FAILs and are
/// skipped; coin `i` comes from `coins.child(i)` whether or not item `i` exists.
pub fn lp_rejection<I>(
    cfg: &PerfectConfig,
    norms: Norms,
    samples: I,
    coins: &RandomSource,
    diag: &mut Diagnostics,
) -> Result<Option<L2Sample>>
where
    I: IntoIterator<Item = Result<Option<L2Sample>>>,
{
    if !norms.usable() {
        return Ok(None);
    }
    for (i, s) in samples.into_iter().enumerate() {
        let Some(s) = s? else { continue };
        let prob = match cfg.acceptance(&s, norms) {
            Ok(p) => p,
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        if diag.accept(prob, coins.child(i as u64).unit()) {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
struct NormSketches {
    f2: AmsSketch,
    fp: Option<FpSketch>,
}

impl NormSketches {
    fn new(cfg: &PerfectConfig, src: &RandomSource) -> Result<Self> {
        let fp = if cfg.p > 2.0 {
            Some(FpSketch::new(cfg.n, cfg.p, FpMode::TwoApprox, src.child(2).seed())?)
        } else {
            None
        };
        Ok(Self { f2: AmsSketch::new(cfg.n, src.child(1).seed()), fp })
    }

    fn add(&mut self, index: u64, delta: i64) {
        self.f2.add(index, delta);
        if let Some(fp) = &mut self.fp {
            fp.add(index, delta);
        }
    }

    fn norms(&self) -> Norms {
        let f2 = self.f2.estimate().value;
        Norms { f2, fp: self.fp.as_ref().map_or(f2, |s| s.estimate().value) }
    }
}

fn check_index(index: u64, n: usize) -> Result<()> {
    if index == 0 || index > n as u64 {
        return Err(Error::IndexOutOfRange { index, n });
    }
    Ok(())
}

/// Perfect L_p sampler (integer or fractional `p >= 2`).
#[derive(Debug, Clone)]
pub struct PerfectLpSampler {
    cfg: PerfectConfig,
    src: RandomSource,
    norms: NormSketches,
    inner: Vec<L2Sampler>,
}

impl PerfectLpSampler {
    pub fn new(cfg: PerfectConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let src = RandomSource::new(seed).stream("perfect-lp");
        let norms = NormSketches::new(&cfg, &src.stream("norms"))?;
        let l2 = cfg.l2_config()?;
        let inner = (0..cfg.repetitions()?)
            .map(|i| L2Sampler::new(l2.clone(), inner_seed(&src, i)))
            .collect::<Result<_>>()?;
        Ok(Self { cfg, src, norms, inner })
    }

    pub fn config(&self) -> &PerfectConfig {
        &self.cfg
    }

    pub fn add(&mut self, index: u64, delta: i64) -> Result<()> {
        check_index(index, self.cfg.n)?;
        self.norms.add(index, delta);
        for s in &mut self.inner {
            s.add(index, delta)?;
        }
        Ok(())
    }

    pub fn sample(&self) -> Result<PerfectDraw> {
        let mut diag = Diagnostics::default();
        for s in &self.inner {
            diag += s.diagnostics();
        }
        let samples = self.inner.iter().map(|s| Ok(s.sample()));
        let kept = lp_rejection(
            &self.cfg,
            self.norms.norms(),
            samples,
            &self.src.stream("accept"),
            &mut diag,
        )?;
        Ok(PerfectDraw::new(kept, diag))
    }

    /// Same outcome as streaming `updates` into [`PerfectLpSampler::new`] and calling
    /// `sample`, but inner sketches are built one at a time and only until a sample is
    /// kept. `diag` covers the sketches that were built.
    pub fn sample_stream(
        cfg: &PerfectConfig,
        seed: u64,
        updates: &[TurnstileUpdate],
    ) -> Result<PerfectDraw> {
        cfg.validate()?;
        let src = RandomSource::new(seed).stream("perfect-lp");
        let mut norms = NormSketches::new(cfg, &src.stream("norms"))?;
        for u in updates {
            check_index(u.index, cfg.n)?;
            norms.add(u.index, u.delta);
        }
        let l2 = cfg.l2_config()?;
        let mut diag = Diagnostics::default();
        let mut built = Diagnostics::default();
        let samples = (0..cfg.repetitions()?).map(|i| {
            let mut s = L2Sampler::new(l2.clone(), inner_seed(&src, i))?;
            s.ingest(updates)?;
            built += s.diagnostics();
            Ok(s.sample())
        });
        let kept = lp_rejection(cfg, norms.norms(), samples, &src.stream("accept"), &mut diag)?;
        diag += built;
        Ok(PerfectDraw::new(kept, diag))
    }
}

impl Sketch for PerfectLpSampler {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        self.add(u.index, u.delta)
    }
}

fn inner_seed(src: &RandomSource, i: usize) -> u64 {
    src.stream("inner").child(i as u64).seed()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyConfig {
    /// `(alpha_d, p_d)` with increasing exponents.
    pub terms: Vec<(f64, f64)>,
    /// `M`, a strict upper bound on every `alpha_d`.
    pub bound: f64,
    /// `N_poly = ceil(c_P ln n)`.
    pub repetition_constant: f64,
    /// Configuration of the inner perfect L_p samplers, `p = p_D`.
    pub inner: PerfectConfig,
}

impl PolyConfig {
    pub fn new(n: usize, g: &GFunction) -> Result<Self> {
        let GFunction::Polynomial { terms, bound } = g else {
            return Err(config("polynomial sampler needs a polynomial G"));
        };
        g.validate()?;
        let p = terms.last().expect("validated").1;
        if p < 2.0 {
            return Err(config(format!("top degree {p} below 2 is not supported")));
        }
        let mut inner = PerfectConfig::new(n, p);
        inner.extra_groups = inner.taylor_depth();
        Ok(Self { terms: terms.clone(), bound: *bound, repetition_constant: 4.0, inner })
    }

    pub fn repetitions(&self) -> usize {
        ((self.repetition_constant * (self.inner.n.max(2) as f64).ln()).ceil() as usize).max(1)
    }

    fn validate(&self) -> Result<()> {
        GFunction::Polynomial { terms: self.terms.clone(), bound: self.bound }.validate()?;
        if self.terms.last().map(|t| t.1) != Some(self.inner.p) {
            return Err(config("inner exponent must equal the top degree"));
        }
        if self.inner.extra_groups < self.inner.taylor_depth() {
            return Err(config("inner sampler must carry Q_T spare estimate groups"));
        }
        self.inner.validate()
    }

    /// `(1 / 5DM) sum_d alpha_d |est(|x_j|^{p_d - p})|`.
    pub fn acceptance(&self, s: &L2Sample) -> Result<f64> {
        let inner = &self.inner;
        let spare = &inner.spare_groups(s)?[..inner.taylor_depth()];
        let mut sum = 0.0;
        for &(alpha, pd) in &self.terms {
            let r = pd - inner.p;
            let t =
                if r == 0.0 { 1.0 } else { inner.power_estimate(spare, s.relative_estimate, r)? };
            sum += alpha * t.abs();
        }
        Ok(sum / (5.0 * self.terms.len() as f64 * self.bound))
    }
}

/// Rejection over perfect L_p samples, as [`lp_rejection`] over L2 samples.
pub fn poly_rejection<I>(
    cfg: &PolyConfig,
    samples: I,
    coins: &RandomSource,
    diag: &mut Diagnostics,
) -> Result<Option<L2Sample>>
where
    I: IntoIterator<Item = Result<Option<L2Sample>>>,
{
    for (i, s) in samples.into_iter().enumerate() {
        let Some(s) = s? else { continue };
        let prob = match cfg.acceptance(&s) {
            Ok(p) => p,
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        if diag.accept(prob, coins.child(i as u64).unit()) {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Perfect sampler for `G(z) = sum_d alpha_d |z|^{p_d}`.
#[derive(Debug, Clone)]
pub struct PolynomialSampler {
    cfg: PolyConfig,
    src: RandomSource,
    inner: Vec<PerfectLpSampler>,
}

impl PolynomialSampler {
    pub fn new(cfg: PolyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let src = RandomSource::new(seed).stream("poly");
        let inner = (0..cfg.repetitions())
            .map(|i| PerfectLpSampler::new(cfg.inner.clone(), inner_seed(&src, i)))
            .collect::<Result<_>>()?;
        Ok(Self { cfg, src, inner })
    }

    pub fn config(&self) -> &PolyConfig {
        &self.cfg
    }

    pub fn add(&mut self, index: u64, delta: i64) -> Result<()> {
        for s in &mut self.inner {
            s.add(index, delta)?;
        }
        Ok(())
    }

    pub fn sample(&self) -> Result<PerfectDraw> {
        let mut diag = Diagnostics::default();
        let mut inner_diag = Diagnostics::default();
        let samples = self.inner.iter().map(|s| {
            let d = s.sample()?;
            inner_diag += d.diag;
            Ok(d.sample)
        });
        let kept = poly_rejection(&self.cfg, samples, &self.src.stream("accept"), &mut diag)?;
        // Inner samplers past the kept one still count toward the diagnostics.
        diag += inner_diag;
        Ok(PerfectDraw::new(kept, diag))
    }

    /// Lazy form of [`PolynomialSampler::sample`]; see [`PerfectLpSampler::sample_stream`].
    pub fn sample_stream(
        cfg: &PolyConfig,
        seed: u64,
        updates: &[TurnstileUpdate],
    ) -> Result<PerfectDraw> {
        cfg.validate()?;
        let src = RandomSource::new(seed).stream("poly");
        let mut diag = Diagnostics::default();
        let mut inner_diag = Diagnostics::default();
        let samples = (0..cfg.repetitions()).map(|i| {
            let d = PerfectLpSampler::sample_stream(&cfg.inner, inner_seed(&src, i), updates)?;
            inner_diag += d.diag;
            Ok(d.sample)
        });
        let kept = poly_rejection(cfg, samples, &src.stream("accept"), &mut diag)?;
        diag += inner_diag;
        Ok(PerfectDraw::new(kept, diag))
    }
}

impl Sketch for PolynomialSampler {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        self.add(u.index, u.delta)
    }
}

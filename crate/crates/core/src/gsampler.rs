//! G-samplers by rejection over L0 samples.
//!
//! An L0 sample is uniform over the support and carries the exact value `x_i`, so it
//! can be kept with probability `G(x_i) / H` for any known bound `H >= G`. The first
//! kept sample has law `G(x_i) / sum_j G(x_j)`; with `G >= Q_low` on the support,
//! `O(H / Q_low)` independent L0 samplers suffice.

use serde::Serialize;

use crate::diagnostics::Diagnostics;
use crate::error::{config, Error, Result};
use crate::l0::{L0Config, L0Sampler};
use crate::random::RandomSource;
use crate::{Draw, GFunction, SampleOutcome, Sketch, TurnstileUpdate};

/// Default repetition constant: `R = ceil(c_G H / Q_low)`.
pub const DEFAULT_REPETITION_CONSTANT: f64 = 6.0;

#[derive(Debug, Clone, Serialize)]
pub struct RejectionPlan {
    #[serde(serialize_with = "debug_string")]
    pub g: GFunction,
    /// Upper bound on `G` over attainable nonzero values.
    pub h: f64,
    /// Lower bound on `G` over attainable nonzero values.
    pub qlow: f64,
    pub repetitions: usize,
}

fn debug_string<S: serde::Serializer>(g: &GFunction, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{g:?}"))
}

impl RejectionPlan {
    /// Plan for arbitrary `G` with declared bounds.
    pub fn general(g: GFunction, h: f64, qlow: f64, c_g: f64) -> Result<Self> {
        g.validate()?;
        if !(qlow > 0.0 && h >= qlow && h.is_finite()) {
            return Err(config(format!("need 0 < Q_low <= H, got Q_low = {qlow}, H = {h}")));
        }
        if !(c_g > 0.0) {
            return Err(config("repetition constant must be positive"));
        }
        let repetitions = (c_g * h / qlow).ceil() as usize;
        Ok(Self { g, h, qlow, repetitions })
    }

    /// `G(z) = ln(1 + |z|)` for streams whose coordinates satisfy `|x_i| <= bound`
    /// (`bound = m M` for `m` updates of magnitude at most `M`).
    pub fn log(bound: u64, c_g: f64) -> Result<Self> {
        let h = (bound.max(1) as f64).ln_1p();
        Self::general(GFunction::Log, h, 2f64.ln(), c_g)
    }

    /// `G(z) = min(T, |z|^p)`; needs `T >= 1` so that `Q_low = 1`.
    pub fn cap(threshold: f64, p: f64, c_g: f64) -> Result<Self> {
        if !(threshold >= 1.0) {
            return Err(config(format!("cap threshold must be >= 1, got {threshold}")));
        }
        Self::general(GFunction::Cap { threshold, p }, threshold, 1.0, c_g)
    }

    /// `G(x) / H`, or a contract error when the plan's bound is wrong.
    pub fn acceptance(&self, value: i64) -> Result<f64> {
        let w = self.g.eval(value);
        if w > self.h * (1.0 + 1e-12) {
            return Err(Error::Contract(format!("G({value}) = {w} exceeds H = {}", self.h)));
        }
        Ok(w / self.h)
    }
}

/// Keeps the first L0 sample that passes its coin; coin `r` is `coins.child(r)`.
pub fn g_rejection<I>(
    plan: &RejectionPlan,
    samples: I,
    coins: &RandomSource,
    diag: &mut Diagnostics,
) -> Result<SampleOutcome>
where
    I: IntoIterator<Item = SampleOutcome>,
{
    for (r, s) in samples.into_iter().enumerate() {
        let SampleOutcome::Sampled { index, value: Some(v) } = s else { continue };
        let prob = plan.acceptance(v as i64)?;
        if diag.accept(prob, coins.child(r as u64).unit()) {
            return Ok(SampleOutcome::Sampled { index, value: Some(v) });
        }
    }
    Ok(SampleOutcome::Fail)
}

#[derive(Debug, Clone)]
pub struct GSampler {
    plan: RejectionPlan,
    n: usize,
    src: RandomSource,
    inner: Vec<L0Sampler>,
}

impl GSampler {
    pub fn new(plan: RejectionPlan, n: usize, seed: u64) -> Result<Self> {
        let src = RandomSource::new(seed).stream("g-sampler");
        let inner = (0..plan.repetitions)
            .map(|r| L0Sampler::new(L0Config::new(n), inner_seed(&src, r)))
            .collect::<Result<_>>()?;
        Ok(Self { plan, n, src, inner })
    }

    pub fn plan(&self) -> &RejectionPlan {
        &self.plan
    }

    pub fn add(&mut self, index: u64, delta: i64) {
        for s in &mut self.inner {
            s.add(index, delta);
        }
    }

    pub fn sample(&self) -> Result<Draw> {
        let mut diag = Diagnostics::default();
        let samples = self.inner.iter().map(L0Sampler::sample);
        let outcome = g_rejection(&self.plan, samples, &self.src.stream("accept"), &mut diag)?;
        Ok(Draw { outcome, diag })
    }

    /// Same outcome as streaming `updates` into [`GSampler::new`] and sampling, with
    /// the L0 sketches built one at a time from the stored stream.
    pub fn sample_stream(
        plan: &RejectionPlan,
        n: usize,
        seed: u64,
        updates: &[TurnstileUpdate],
    ) -> Result<Draw> {
        let src = RandomSource::new(seed).stream("g-sampler");
        let mut built = Ok(());
        let samples = (0..plan.repetitions).map_while(|r| {
            let mut s = match L0Sampler::new(L0Config::new(n), inner_seed(&src, r)) {
                Ok(s) => s,
                Err(e) => {
                    built = Err(e);
                    return None;
                }
            };
            if let Err(e) = s.ingest(updates) {
                built = Err(e);
                return None;
            }
            Some(s.sample())
        });
        let mut diag = Diagnostics::default();
        let outcome = g_rejection(plan, samples, &src.stream("accept"), &mut diag)?;
        built?;
        Ok(Draw { outcome, diag })
    }
}

impl Sketch for GSampler {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        if u.index == 0 || u.index > self.n as u64 {
            return Err(Error::IndexOutOfRange { index: u.index, n: self.n });
        }
        self.add(u.index, u.delta);
        Ok(())
    }
}

fn inner_seed(src: &RandomSource, r: usize) -> u64 {
    src.stream("inner").child(r as u64).seed()
}

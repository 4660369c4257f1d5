//! Samplers and moment estimators over turnstile streams.
//!
//! A turnstile stream is a sequence of updates `(i, delta)` to an implicit integer
//! vector `x` of length `n`. The samplers here return a coordinate `i` with probability
//! proportional to `G(x_i)` for several families of `G`:
//!
//! * [`l0`]: uniform over the support, exact value attached.
//! * [`l2`]: `x_i^2 / F_2` through exponential scaling with duplication.
//! * [`perfect`]: `|x_i|^p / F_p` for `p > 2` by rejection over L2 samples, plus
//!   polynomial `G`.
//! * [`approx`]: a one-pass `(1 +- eps)` L_p sampler using duplication and a
//!   two-stage sketch with a statistical gap test.
//! * [`gsampler`]: logarithmic, capped, and bounded `G` by rejection over L0 samples.
//! * [`subset`]: estimating `sum_{i in Q} |x_i|^p` for a query set chosen after the
//!   stream ends.
//!
//! Everything is seeded: the same seed and stream give the same outputs.

pub mod approx;
pub mod countsketch;
pub mod diagnostics;
pub mod duplication;
pub mod error;
pub mod gsampler;
pub mod l0;
pub mod l2;
pub mod norms;
pub mod perfect;
pub mod random;
pub mod stream;
pub mod subset;
pub mod verify;

pub use diagnostics::Diagnostics;
pub use error::{Error, Result};
pub use stream::{
    exact_g_distribution, generate_stream, read_stream, tv_distance, write_stream, ExactVector,
    GFunction, Pattern, QuerySet, Stream, StreamConfig, StreamHeader, TurnstileUpdate,
};

/// A sampler's answer: a 1-based coordinate, or FAIL.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum SampleOutcome {
    Sampled {
        index: u64,
        /// Estimate of `x_index` when the sampler produces one.
        value: Option<f64>,
    },
    Fail,
}

impl SampleOutcome {
    pub fn index(&self) -> Option<u64> {
        match self {
            SampleOutcome::Sampled { index, .. } => Some(*index),
            SampleOutcome::Fail => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            SampleOutcome::Sampled { value, .. } => *value,
            SampleOutcome::Fail => None,
        }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, SampleOutcome::Fail)
    }
}

/// One sampler query: the outcome plus the counters accumulated to produce it.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Draw {
    pub outcome: SampleOutcome,
    pub diag: Diagnostics,
}

/// A linear sketch that ingests turnstile updates.
pub trait Sketch {
    fn update(&mut self, u: &TurnstileUpdate) -> Result<()>;

    fn ingest(&mut self, updates: &[TurnstileUpdate]) -> Result<()> {
        for u in updates {
            self.update(u)?;
        }
        Ok(())
    }
}

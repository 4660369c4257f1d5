use std::ops::AddAssign;

use serde::Serialize;

/// Event counters that accumulate across a sampler's lifetime.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    /// Exponentials (or scaled duplicates) clipped to the supported range.
    pub clip_events: u64,
    /// Acceptance probabilities that exceeded 1 and were clamped.
    pub clamped_acceptances: u64,
    /// Acceptance probabilities evaluated.
    pub acceptance_draws: u64,
    /// Elementary randomness/table operations performed by updates.
    pub update_ops: u64,
}

impl Diagnostics {
    /// Turns an acceptance probability into a coin flip, clamping to 1 and counting it.
    pub fn accept(&mut self, prob: f64, u: f64) -> bool {
        self.acceptance_draws += 1;
        let prob = if prob > 1.0 {
            self.clamped_acceptances += 1;
            1.0
        } else {
            prob.max(0.0)
        };
        u < prob
    }

    pub fn clamp_rate(&self) -> f64 {
        if self.acceptance_draws == 0 {
            0.0
        } else {
            self.clamped_acceptances as f64 / self.acceptance_draws as f64
        }
    }
}

impl AddAssign for Diagnostics {
    fn add_assign(&mut self, o: Self) {
        self.clip_events += o.clip_events;
        self.clamped_acceptances += o.clamped_acceptances;
        self.acceptance_draws += o.acceptance_draws;
        self.update_ops += o.update_ops;
    }
}

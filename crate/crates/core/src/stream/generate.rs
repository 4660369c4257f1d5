use rand::distr::Distribution;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};

use super::{Stream, StreamHeader, TurnstileUpdate, MAX_UNIVERSE};
use crate::error::{config, Result};
use crate::random::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    UniformRandom,
    Zipfian,
    SingleHeavy,
    InsertThenCancel,
}

impl std::str::FromStr for Pattern {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-random" => Ok(Pattern::UniformRandom),
            "zipfian" => Ok(Pattern::Zipfian),
            "single-heavy" => Ok(Pattern::SingleHeavy),
            "insert-then-cancel" => Ok(Pattern::InsertThenCancel),
            _ => Err(config(format!("unknown pattern {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub n: i64,
    pub m: u64,
    pub max_delta: i64,
    pub pattern: Pattern,
    pub seed: u64,
}

fn nonzero_delta(bound: i64, src: &mut RandomSource) -> i64 {
    let mag = 1 + src.below(bound as u64) as i64;
    mag * src.sign()
}

/// Deterministic synthetic stream; the same config always yields the same updates.
pub fn generate_stream(cfg: &StreamConfig) -> Result<Stream> {
    if cfg.n <= 0 || cfg.n as usize > MAX_UNIVERSE {
        return Err(config(format!("n = {} outside [1, 2^20]", cfg.n)));
    }
    if cfg.max_delta <= 0 {
        return Err(config("max_delta must be positive"));
    }
    let n = cfg.n as u64;
    let bound = cfg.max_delta;
    let mut src = RandomSource::new(cfg.seed).stream("generate");
    let mut updates = Vec::with_capacity(cfg.m as usize);
    match cfg.pattern {
        Pattern::UniformRandom => {
            for _ in 0..cfg.m {
                let i = 1 + src.below(n);
                updates.push(TurnstileUpdate::new(i, nonzero_delta(bound, &mut src)));
            }
        }
        Pattern::Zipfian => {
            let zipf = Zipf::new(n as f64, 1.1).map_err(|e| config(e.to_string()))?;
            for _ in 0..cfg.m {
                let i = zipf.sample(&mut src) as u64;
                let delta = 1 + src.below(bound as u64) as i64;
                updates.push(TurnstileUpdate::new(i.clamp(1, n), delta));
            }
        }
        Pattern::SingleHeavy => {
            let heavy = 1 + src.below(n);
            for k in 0..cfg.m {
                if k % 2 == 0 {
                    updates.push(TurnstileUpdate::new(heavy, bound));
                } else {
                    let i = 1 + src.below(n);
                    updates.push(TurnstileUpdate::new(i, src.sign()));
                }
            }
        }
        Pattern::InsertThenCancel => {
            let inserts = cfg.m.div_ceil(2);
            for _ in 0..inserts {
                let i = 1 + src.below(n);
                updates.push(TurnstileUpdate::new(i, nonzero_delta(bound, &mut src)));
            }
            // Undo the most recent inserts in reverse order; the earliest survive.
            let cancels = cfg.m - inserts;
            for k in 0..cancels as usize {
                let u = updates[inserts as usize - 1 - k];
                updates.push(TurnstileUpdate::new(u.index, -u.delta));
            }
        }
    }
    let header = StreamHeader { n: cfg.n as usize, m: cfg.m, max_delta: cfg.max_delta };
    Stream::new(header, updates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pattern: Pattern, m: u64) -> StreamConfig {
        StreamConfig { n: 32, m, max_delta: 5, pattern, seed: 17 }
    }

    #[test]
    fn deterministic_per_seed() {
        for p in [
            Pattern::UniformRandom,
            Pattern::Zipfian,
            Pattern::SingleHeavy,
            Pattern::InsertThenCancel,
        ] {
            let a = generate_stream(&cfg(p, 200)).unwrap();
            let b = generate_stream(&cfg(p, 200)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.updates.len(), 200);
        }
    }

    #[test]
    fn empty_stream_gives_zero_vector() {
        let s = generate_stream(&cfg(Pattern::UniformRandom, 0)).unwrap();
        assert!(s.updates.is_empty());
        assert!(s.mirror().unwrap().is_zero());
    }

    #[test]
    fn nonpositive_universe_rejected() {
        let mut c = cfg(Pattern::UniformRandom, 5);
        c.n = 0;
        assert!(generate_stream(&c).is_err());
        c.n = -3;
        assert!(generate_stream(&c).is_err());
    }

    #[test]
    fn full_cancellation_returns_to_zero() {
        let s = generate_stream(&cfg(Pattern::InsertThenCancel, 100)).unwrap();
        assert!(s.mirror().unwrap().is_zero());
        let s = generate_stream(&cfg(Pattern::InsertThenCancel, 101)).unwrap();
        assert!(!s.mirror().unwrap().is_zero());
    }
}

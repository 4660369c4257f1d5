//! Turnstile streams, the exact frequency mirror, and target distributions.
//!
//! The mirror ([`ExactVector`]) exists for verification only. No sampler reads it;
//! samplers see updates through their own `update` methods.

mod generate;
mod gfunc;
mod io;

pub use generate::{generate_stream, Pattern, StreamConfig};
pub use gfunc::{CustomG, GFunction};
pub use io::{read_stream, write_stream, StreamFormat};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported universe.
pub const MAX_UNIVERSE: usize = 1 << 20;

/// One turnstile update: coordinate `index` (1-based) changes by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnstileUpdate {
    pub index: u64,
    pub delta: i64,
}

impl TurnstileUpdate {
    pub fn new(index: u64, delta: i64) -> Self {
        Self { index, delta }
    }
}

/// Stream parameters: universe size, update count, per-update magnitude bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub n: usize,
    pub m: u64,
    pub max_delta: i64,
}

impl StreamHeader {
    /// Bound on any coordinate's magnitude, `m * M`.
    pub fn magnitude_bound(&self) -> u64 {
        self.m.saturating_mul(self.max_delta.unsigned_abs())
    }

    pub fn check(&self, u: &TurnstileUpdate) -> Result<()> {
        if u.index == 0 || u.index > self.n as u64 {
            return Err(Error::IndexOutOfRange { index: u.index, n: self.n });
        }
        if u.delta.unsigned_abs() > self.max_delta.unsigned_abs() {
            return Err(Error::DeltaOutOfRange { delta: u.delta, bound: self.max_delta });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    pub header: StreamHeader,
    pub updates: Vec<TurnstileUpdate>,
}

impl Stream {
    pub fn new(header: StreamHeader, updates: Vec<TurnstileUpdate>) -> Result<Self> {
        if header.n == 0 || header.n > MAX_UNIVERSE {
            return Err(crate::error::config(format!("n = {} outside [1, 2^20]", header.n)));
        }
        if updates.len() as u64 != header.m {
            return Err(crate::error::config(format!(
                "header declares {} updates, found {}",
                header.m,
                updates.len()
            )));
        }
        for u in &updates {
            header.check(u)?;
        }
        Ok(Self { header, updates })
    }

    /// Builds a short stream that inserts each nonzero coordinate of `values` once.
    pub fn from_values(values: &[i64]) -> Result<Self> {
        let updates: Vec<_> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, &v)| TurnstileUpdate::new(i as u64 + 1, v))
            .collect();
        let max_delta = values.iter().map(|v| v.abs()).max().unwrap_or(0).max(1);
        let header = StreamHeader { n: values.len(), m: updates.len() as u64, max_delta };
        Self::new(header, updates)
    }

    pub fn n(&self) -> usize {
        self.header.n
    }

    pub fn mirror(&self) -> Result<ExactVector> {
        let mut x = ExactVector::new(self.header.n)?;
        for u in &self.updates {
            x.apply_update(u)?;
        }
        Ok(x)
    }
}

/// Exact frequency vector maintained alongside a sketch for verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactVector {
    values: Vec<i64>,
    update_count: u64,
}

impl ExactVector {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_UNIVERSE {
            return Err(crate::error::config(format!("n = {n} outside [1, 2^20]")));
        }
        Ok(Self { values: vec![0; n], update_count: 0 })
    }

    pub fn from_values(values: Vec<i64>) -> Result<Self> {
        if values.is_empty() || values.len() > MAX_UNIVERSE {
            return Err(crate::error::config("vector length outside [1, 2^20]"));
        }
        Ok(Self { values, update_count: 0 })
    }

    pub fn apply_update(&mut self, u: &TurnstileUpdate) -> Result<()> {
        let n = self.values.len();
        if u.index == 0 || u.index > n as u64 {
            return Err(Error::IndexOutOfRange { index: u.index, n });
        }
        let slot = &mut self.values[(u.index - 1) as usize];
        *slot = slot.checked_add(u.delta).ok_or(Error::Overflow(u.index))?;
        self.update_count += 1;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Value at 1-based `index`.
    pub fn get(&self, index: u64) -> i64 {
        self.values[(index - 1) as usize]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn support(&self) -> Vec<u64> {
        (1..=self.values.len() as u64).filter(|&i| self.get(i) != 0).collect()
    }

    /// `F_p = sum |x_i|^p`.
    pub fn moment(&self, p: f64) -> f64 {
        self.values.iter().map(|&v| (v.unsigned_abs() as f64).powf(p)).sum()
    }

    pub fn subset_moment(&self, p: f64, q: &QuerySet) -> f64 {
        q.iter()
            .filter(|&i| i >= 1 && i <= self.n() as u64)
            .map(|i| (self.get(i).unsigned_abs() as f64).powf(p))
            .sum()
    }
}

/// Set of 1-based coordinates for subset-moment queries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet(BTreeSet<u64>);

impl QuerySet {
    pub fn new(indices: impl IntoIterator<Item = u64>) -> Self {
        Self(indices.into_iter().collect())
    }

    pub fn contains(&self, index: u64) -> bool {
        self.0.contains(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses one coordinate per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (k, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let i: u64 = t.parse().map_err(|_| Error::Parse {
                line: k + 1,
                msg: format!("expected coordinate, got {t:?}"),
            })?;
            set.insert(i);
        }
        Ok(Self(set))
    }
}

/// Target law `q_i = G(x_i) / sum_j G(x_j)` over 0-based positions.
pub fn exact_g_distribution(x: &ExactVector, g: &GFunction) -> Result<Vec<f64>> {
    let weights: Vec<f64> = x.values().iter().map(|&v| g.eval(v)).collect();
    let total: f64 = weights.iter().sum();
    if x.is_zero() || total <= 0.0 || !total.is_finite() {
        return Err(Error::Degenerate("G-weights sum to zero"));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

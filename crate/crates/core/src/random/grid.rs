use std::sync::{Arc, Mutex, OnceLock};

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{config, Result};

type TableKey = (u64, i32);

/// Grid values are shared between every grid with the same `(eta, qmax)`; samplers
/// build many identical grids.
fn value_table(eta: f64, qmax: i32) -> Arc<[f64]> {
    static TABLES: OnceLock<Mutex<FxHashMap<TableKey, Arc<[f64]>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(Default::default);
    let mut guard = tables.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((eta.to_bits(), qmax))
        .or_insert_with(|| (-qmax..=qmax).map(|q| (1.0 + eta).powi(q)).collect())
        .clone()
}

/// Geometric grid `I_q = (1 + eta)^q` for `q` in `[-qmax, qmax]`.
///
/// `qmax = ceil(c' ln N / ln(1 + eta))` so the grid covers every value an exponential
/// clipped to `[N^-c', N^c']` can produce after scaling, for any `p >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationGrid {
    eta: f64,
    ln_base: f64,
    qmax: i32,
    #[serde(skip)]
    values: Arc<[f64]>,
}

impl DiscretizationGrid {
    pub fn new(eta: f64, universe: f64, clip_exponent: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 0.1) {
            return Err(config(format!("grid eta = {eta} outside (0, 1/10]")));
        }
        if !(universe >= 2.0) {
            return Err(config("grid universe must be at least 2"));
        }
        let ln_base = eta.ln_1p();
        let qmax = (clip_exponent * universe.ln() / ln_base).ceil() as i32;
        Ok(Self { eta, ln_base, qmax, values: value_table(eta, qmax) })
    }

    /// Grid with an arbitrary base, used by the rounding examples (`eta` above 1/10).
    pub fn with_range(eta: f64, qmax: i32) -> Result<Self> {
        if !(eta > 0.0) || qmax < 1 {
            return Err(config("grid needs eta > 0 and qmax >= 1"));
        }
        Ok(Self { eta, ln_base: eta.ln_1p(), qmax, values: value_table(eta, qmax) })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn qmin(&self) -> i32 {
        -self.qmax
    }

    pub fn qmax(&self) -> i32 {
        self.qmax
    }

    pub fn cells(&self) -> usize {
        (2 * self.qmax + 1) as usize
    }

    /// `I_q`; `q` must lie in `[qmin, qmax]`.
    #[inline]
    pub fn value(&self, q: i32) -> f64 {
        self.values[(q + self.qmax) as usize]
    }

    /// Index of the largest grid point at most `x`, clamped to the grid.
    /// The flag reports whether clamping happened.
    pub fn cell_of(&self, x: f64) -> (i32, bool) {
        if !(x > 0.0) {
            return (self.qmin(), true);
        }
        let q = (x.ln() / self.ln_base).floor();
        if q < self.qmin() as f64 {
            return (self.qmin(), true);
        }
        if q > self.qmax as f64 {
            return (self.qmax, true);
        }
        let mut qi = q as i32;
        // Correct floating-point drift at cell boundaries.
        while qi > self.qmin() && self.value(qi) > x {
            qi -= 1;
        }
        while qi < self.qmax && self.value(qi + 1) <= x {
            qi += 1;
        }
        (qi, false)
    }

    /// Cell of `x` given `ln x`, without the boundary correction of [`Self::cell_of`].
    /// Used for scaled duplicates, which are never materialized.
    #[inline]
    pub fn cell_of_ln(&self, ln_x: f64) -> (i32, bool) {
        let r = ln_x / self.ln_base;
        if !(r >= self.qmin() as f64) {
            return (self.qmin(), true);
        }
        if r >= (self.qmax + 1) as f64 {
            return (self.qmax, true);
        }
        // Truncation toward zero, corrected to a floor for negative non-integers.
        let t = r as i32;
        (if (t as f64) > r { t - 1 } else { t }, false)
    }

    /// `rnd_eta(x)`: the largest `(1 + eta)^q <= x`.
    pub fn round(&self, x: f64) -> f64 {
        self.value(self.cell_of(x).0)
    }

    /// Probability that `e^{-1/p}` (`e` standard exponential) lands in cell `q`.
    /// The two boundary cells absorb the tails so the cells form a partition.
    pub fn cell_probability(&self, q: i32, p: f64) -> f64 {
        let lo = if q == self.qmin() { 0.0 } else { self.value(q) };
        let hi = if q == self.qmax { f64::INFINITY } else { self.value(q + 1) };
        interval_probability(lo, hi, p)
    }
}

/// `P(lo <= e^{-1/p} < hi) = exp(-hi^{-p}) - exp(-lo^{-p})` for standard exponential `e`.
pub fn interval_probability(lo: f64, hi: f64, p: f64) -> f64 {
    let a = if hi.is_infinite() { 0.0 } else { hi.powf(-p) };
    if lo <= 0.0 {
        return (-a).exp();
    }
    let b = lo.powf(-p);
    // exp(-a) - exp(-b) = exp(-a) * (1 - exp(a - b)), stable when both are near 1.
    (-a).exp() * -(a - b).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_examples() {
        let g = DiscretizationGrid::with_range(0.5, 40).unwrap();
        assert_eq!(g.round(1.0), 1.0);
        assert_eq!(g.round(1.7), 1.5);
        assert!((g.round(0.9) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn eta_bounds() {
        assert!(DiscretizationGrid::new(0.0, 16.0, 6.0).is_err());
        assert!(DiscretizationGrid::new(0.2, 16.0, 6.0).is_err());
        let g = DiscretizationGrid::new(0.1, 16.0, 6.0).unwrap();
        assert_eq!(g.qmax(), (6.0 * 16f64.ln() / 1.1f64.ln()).ceil() as i32);
        assert_eq!(g.qmin(), -g.qmax());
    }

    #[test]
    fn cell_probability_example() {
        let p = interval_probability(1.0, 2.0, 2.0);
        assert!((p - ((-0.25f64).exp() - (-1.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.410_92).abs() < 1e-5);
    }

    #[test]
    fn cells_partition_unit_mass() {
        let g = DiscretizationGrid::new(0.05, 16.0, 6.0).unwrap();
        for p in [2.0, 2.5, 3.0] {
            let total: f64 = (g.qmin()..=g.qmax()).map(|q| g.cell_probability(q, p)).sum();
            assert!((total - 1.0).abs() < 1e-12, "p={p} total={total}");
        }
    }

    #[test]
    fn clamping_flagged() {
        let g = DiscretizationGrid::new(0.1, 4.0, 1.0).unwrap();
        assert_eq!(g.cell_of(1e30), (g.qmax(), true));
        assert_eq!(g.cell_of(1e-30), (g.qmin(), true));
        assert!(!g.cell_of(1.3).1);
    }
}

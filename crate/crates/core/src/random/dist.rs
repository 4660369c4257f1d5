use rand::distr::Distribution;
use rand_distr::{Binomial, Exp1, Geometric, StandardNormal};

use super::{DiscretizationGrid, RandomSource};

/// Clip exponent `c'`: exponentials are clipped to `[N^-c', N^c']`.
pub const CLIP_EXPONENT: f64 = 6.0;

/// Clip range for exponentials drawn over a universe of `N` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpClip {
    pub lo: f64,
    pub hi: f64,
}

impl ExpClip {
    pub fn for_universe(universe: f64) -> Self {
        Self { lo: universe.powf(-CLIP_EXPONENT), hi: universe.powf(CLIP_EXPONENT) }
    }
}

/// Standard exponential clipped to `clip`; `events` counts clipped draws.
pub fn sample_exponential(src: &mut RandomSource, clip: ExpClip, events: &mut u64) -> f64 {
    let e: f64 = Exp1.sample(src);
    if e < clip.lo {
        *events += 1;
        clip.lo
    } else if e > clip.hi {
        *events += 1;
        clip.hi
    } else {
        e
    }
}

#[inline]
pub fn standard_normal(src: &mut RandomSource) -> f64 {
    StandardNormal.sample(src)
}

pub fn binomial(n: u64, p: f64, src: &mut RandomSource) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0,1)").sample(src)
}

/// `sum_{k<a} value * s_k` for i.i.d. Rademacher `s_k`, drawn as `value * (2 Bin(a, 1/2) - a)`.
pub fn signed_sum(a: u64, value: f64, src: &mut RandomSource) -> f64 {
    value * signed_count(a, src) as f64
}

/// Sum of `a` Rademacher signs.
pub fn signed_count(a: u64, src: &mut RandomSource) -> i64 {
    match a {
        0 => 0,
        1 => src.sign(),
        _ => 2 * binomial(a, 0.5, src) as i64 - a as i64,
    }
}

/// `sum_{k<a} value * g_k` for i.i.d. standard Gaussians, drawn as `g * sqrt(a) * value`.
pub fn gaussian_sum(a: u64, value: f64, src: &mut RandomSource) -> f64 {
    standard_normal(src) * (a as f64).sqrt() * value
}

/// Gap to the next Bernoulli(1/l) success, so `1 + Geometric(1/l)` with support `{1, 2, ...}`.
#[inline]
pub fn geometric_gap(l: u64, src: &mut RandomSource) -> u64 {
    if l <= 1 {
        return 1;
    }
    1 + Geometric::new(1.0 / l as f64).expect("valid p").sample(src)
}

/// Precomputed sampler for [`geometric_gap`] with a fixed `l`, by inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricGap {
    inv_ln_q: f64,
}

impl GeometricGap {
    pub fn new(l: u64) -> Self {
        let inv_ln_q = if l <= 1 { 0.0 } else { 1.0 / (-1.0 / l as f64).ln_1p() };
        Self { inv_ln_q }
    }

    #[inline]
    pub fn sample(&self, src: &mut RandomSource) -> u64 {
        if self.inv_ln_q == 0.0 {
            return 1;
        }
        // P[gap > k] = (1 - 1/l)^k; 1 - unit() lies in (0, 1].
        let u = 1.0 - src.unit();
        1 + (u.ln() * self.inv_ln_q).floor().min(u64::MAX as f64 / 2.0) as u64
    }
}

/// Uniform draw from `[1/2, 3/2]`.
pub fn uniform_mu(src: &mut RandomSource) -> f64 {
    0.5 + src.unit()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum CountStrategy {
    /// Conditional binomials over every grid cell; work proportional to the cell count.
    Multinomial,
    /// One exponential per duplicate, then binning; work proportional to the copy count.
    Binned,
    /// Whichever of the two does less work.
    #[default]
    Auto,
}

/// How many of `copies` duplicates land in each grid cell after scaling by `e^{-1/p}`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DuplicateCounts {
    /// Nonzero `(cell, count)` pairs in ascending cell order.
    pub cells: Vec<(i32, u64)>,
    pub clamp_events: u64,
}

impl DuplicateCounts {
    pub fn from_cells(mut raw: Vec<i32>, clamp_events: u64) -> Self {
        raw.sort_unstable();
        let mut cells: Vec<(i32, u64)> = Vec::new();
        for q in raw {
            match cells.last_mut() {
                Some((c, k)) if *c == q => *k += 1,
                _ => cells.push((q, 1)),
            }
        }
        Self { cells, clamp_events }
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().map(|c| c.1).sum()
    }

    pub fn count(&self, q: i32) -> u64 {
        self.cells.iter().find(|c| c.0 == q).map_or(0, |c| c.1)
    }

    /// Removes the `t` largest duplicates and returns their cells, largest first.
    pub fn pop_top(&mut self, t: usize) -> Vec<i32> {
        let mut out = Vec::with_capacity(t);
        while out.len() < t {
            let Some(last) = self.cells.last_mut() else {
                break;
            };
            out.push(last.0);
            last.1 -= 1;
            if last.1 == 0 {
                self.cells.pop();
            }
        }
        out
    }
}

/// Cell of one duplicate: `rnd_eta(e^{-1/p})`.
#[inline]
pub fn duplicate_cell(grid: &DiscretizationGrid, p: f64, src: &mut RandomSource) -> (i32, bool) {
    let e: f64 = Exp1.sample(src);
    grid.cell_of_ln(-e.ln() / p)
}

/// Multinomial occupancy of grid cells by `copies` duplicates.
pub fn sample_duplicate_counts(
    copies: u64,
    p: f64,
    grid: &DiscretizationGrid,
    strategy: CountStrategy,
    src: &mut RandomSource,
) -> DuplicateCounts {
    let binned = match strategy {
        CountStrategy::Binned => true,
        CountStrategy::Multinomial => false,
        CountStrategy::Auto => copies <= grid.cells() as u64,
    };
    if binned {
        let mut clamps = 0;
        let raw: Vec<i32> = (0..copies)
            .map(|_| {
                let (q, c) = duplicate_cell(grid, p, src);
                clamps += c as u64;
                q
            })
            .collect();
        return DuplicateCounts::from_cells(raw, clamps);
    }
    let mut cells = Vec::new();
    let mut remaining = copies;
    let mut mass_left = 1.0f64;
    let mut clamps = 0;
    for q in (grid.qmin()..=grid.qmax()).rev() {
        if remaining == 0 {
            break;
        }
        let pq = grid.cell_probability(q, p);
        let d = if q == grid.qmin() {
            remaining
        } else {
            binomial(remaining, (pq / mass_left).min(1.0), src)
        };
        mass_left -= pq;
        if d > 0 {
            if q == grid.qmin() || q == grid.qmax() {
                clamps += d;
            }
            cells.push((q, d));
            remaining -= d;
        }
    }
    cells.reverse();
    DuplicateCounts { cells, clamp_events: clamps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_mean_and_tail() {
        let mut src = RandomSource::new(5).stream("exp");
        let clip = ExpClip::for_universe(100.0);
        let mut ev = 0;
        let n = 1_000_000;
        let mean: f64 =
            (0..n).map(|_| sample_exponential(&mut src, clip, &mut ev)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert_eq!(ev, 0);
        // P[e >= ln 100] = 1/100.
        let mut src = RandomSource::new(6);
        let hits = (0..n)
            .filter(|_| sample_exponential(&mut src, clip, &mut ev) >= 100f64.ln())
            .count() as f64;
        let sd = (n as f64 * 0.01 * 0.99).sqrt();
        assert!((hits - n as f64 * 0.01).abs() < 4.0 * sd, "hits {hits}");
    }

    #[test]
    fn cell_probability_matches_monte_carlo() {
        let mut src = RandomSource::new(12);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| {
                let e: f64 = Exp1.sample(&mut src);
                let x = e.powf(-0.5);
                (1.0..2.0).contains(&x)
            })
            .count() as f64;
        let p = super::super::interval_probability(1.0, 2.0, 2.0);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 4.0 * sd);
    }

    #[test]
    fn clipping_counts_events() {
        let mut src = RandomSource::new(1);
        let clip = ExpClip { lo: 0.5, hi: 0.6 };
        let mut ev = 0;
        for _ in 0..100 {
            let e = sample_exponential(&mut src, clip, &mut ev);
            assert!((0.5..=0.6).contains(&e));
        }
        assert!(ev > 50);
    }

    #[test]
    fn signed_sum_variance() {
        let mut src = RandomSource::new(2);
        let n = 200_000;
        let var = (0..n).map(|_| signed_sum(100, 1.0, &mut src).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 100.0).abs() < 5.0, "var {var}");
    }

    #[test]
    fn gaussian_sum_std() {
        let mut src = RandomSource::new(3);
        let n = 200_000;
        let var = (0..n).map(|_| gaussian_sum(9, 2.0, &mut src).powi(2)).sum::<f64>() / n as f64;
        assert!((var.sqrt() - 6.0).abs() < 0.12, "std {}", var.sqrt());
    }

    #[test]
    fn geometric_gap_law() {
        let mut src = RandomSource::new(4);
        assert!((0..1000).all(|_| geometric_gap(1, &mut src) == 1));
        let n = 200_000;
        let mean = (0..n).map(|_| geometric_gap(8, &mut src)).sum::<u64>() as f64 / n as f64;
        assert!((mean - 8.0).abs() < 0.24, "mean {mean}");
        let g = GeometricGap::new(8);
        let mean = (0..n).map(|_| g.sample(&mut src)).sum::<u64>() as f64 / n as f64;
        assert!((mean - 8.0).abs() < 0.24, "mean {mean}");
        assert!((0..1000).all(|_| GeometricGap::new(1).sample(&mut src) == 1));
    }

    #[test]
    fn mu_range() {
        let mut src = RandomSource::new(9);
        assert!((0..10_000).map(|_| uniform_mu(&mut src)).all(|m| (0.5..1.5).contains(&m)));
    }

    #[test]
    fn pop_top_takes_largest() {
        let mut d = DuplicateCounts::from_cells(vec![3, -1, 3, 7, 0], 0);
        assert_eq!(d.pop_top(3), vec![7, 3, 3]);
        assert_eq!(d.cells, vec![(-1, 1), (0, 1)]);
        assert_eq!(d.total(), 2);
    }

    #[test]
    fn multinomial_conserves_copies() {
        let g = DiscretizationGrid::new(0.1, 16.0, 6.0).unwrap();
        let mut src = RandomSource::new(8);
        for _ in 0..50 {
            let d = sample_duplicate_counts(16, 3.0, &g, CountStrategy::Multinomial, &mut src);
            assert_eq!(d.total(), 16);
            assert!(d.cells.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}

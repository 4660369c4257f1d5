//! Duplicated, exponentially scaled vectors sketched without materializing them.
//!
//! Coordinate `i` stands for `n^c` duplicates `x_i e_{i,k}^{-1/p}`, each scale rounded
//! down to the grid `I_q = (1 + eta)^q`. Only the cell occupancy of the duplicates
//! matters, so an update draws (or replays) the counts `D_q` and touches the sketches
//! once per occupied cell or sampled bucket instead of once per duplicate:
//!
//! * stage 1 sketches the top `t` duplicates of every coordinate (the vector `v`);
//! * stage 2 sketches the remaining duplicates (`u` with the maxima removed) into
//!   `K` kept buckets out of `L` conceptual ones, the rest being discarded;
//! * Gaussian projections of the whole duplicated vector give the norm estimate `R`.
//!
//! Every random choice is a pure function of `(seed, index)`, so repeated updates to a
//! coordinate reuse one realization and the sketches stay linear.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::countsketch::{median, GridCounter, SketchTable};
use crate::diagnostics::Diagnostics;
use crate::error::{config, Error, Result};
use crate::norms::l2_gaussian_estimate;
use crate::random::{
    binomial, duplicate_cell, sample_duplicate_counts, signed_count, standard_normal,
    CountStrategy, DiscretizationGrid, GeometricGap, RandomSource, CLIP_EXPONENT,
};
use crate::ExactVector;

/// Largest duplicate count the materializing path accepts.
pub const NAIVE_CAP: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DupConfig {
    pub n: usize,
    pub p: f64,
    /// Duplication exponent: every coordinate has `n^c` duplicates.
    pub c: u32,
    pub eta: f64,
    /// Duplicates per coordinate kept in stage 1 (`t`).
    pub entries_per_index: usize,
    pub stage1_rows: usize,
    pub stage1_buckets: u64,
    pub stage2_rows: usize,
    /// Conceptual bucket count `L` of stage 2.
    pub stage2_buckets: u64,
    /// Materialized stage-2 buckets `K`; this also caps the candidate set.
    pub stage2_slots: usize,
    pub gauss_reps: usize,
    /// Gap test constant `kappa`: pass iff `|y(1)| - |y(2)| > kappa R / (mu sqrt(L))`.
    pub gap_constant: f64,
    pub strategy: CountStrategy,
    /// Keep each coordinate's footprint after its first update.
    pub cache: bool,
}

impl DupConfig {
    pub fn copies(&self) -> u64 {
        (self.n as u64).pow(self.c)
    }

    /// Length `n^{c+1}` of the duplicated vector.
    pub fn universe(&self) -> f64 {
        (self.n as f64).powi(self.c as i32 + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config("duplication needs n >= 1"));
        }
        if !(self.p >= 1.0) {
            return Err(config("duplication needs p >= 1"));
        }
        let copies = (self.n as f64).powi(self.c as i32);
        if copies > 1e15 {
            return Err(config(format!("n^c = {copies:e} duplicates is out of range")));
        }
        if self.entries_per_index == 0 || self.stage2_slots == 0 || self.gauss_reps == 0 {
            return Err(config("duplication shape parameters must be positive"));
        }
        if self.stage2_rows == 0 || self.stage2_buckets < self.stage2_slots as u64 {
            return Err(config("stage 2 needs rows and at least K conceptual buckets"));
        }
        Ok(())
    }
}

/// What one unit update to a coordinate adds to the sketches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Footprint {
    /// Cells of the top duplicates, largest first.
    pub top: Vec<i32>,
    /// Signed duplicate counts per `(row, slot, cell)`, sorted.
    pub stage2: Vec<(u32, u32, i32, i64)>,
    /// Contribution to each Gaussian projection.
    pub gauss: Vec<f64>,
    pub clamps: u64,
    /// Elementary operations spent building the footprint.
    pub ops: u64,
}

/// Result of the candidate search and gap test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DupQuery {
    pub r_hat: f64,
    /// Size of the candidate set `B`.
    pub candidates: usize,
    /// Stage-1 key of the largest combined estimate and that estimate.
    pub top: Option<(u64, f64)>,
    pub gap: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl DupQuery {
    /// 1-based coordinate behind the top entry.
    pub fn index(&self, t: usize) -> Option<u64> {
        self.top.map(|(key, _)| key / t as u64 + 1)
    }
}

#[derive(Debug, Clone)]
pub struct DupSketch {
    cfg: DupConfig,
    grid: DiscretizationGrid,
    src: RandomSource,
    stage1: SketchTable<GridCounter>,
    stage2: SketchTable<GridCounter>,
    gauss: Vec<f64>,
    cache: FxHashMap<u64, Footprint>,
    diag: Diagnostics,
}

impl DupSketch {
    pub fn new(cfg: DupConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let grid = DiscretizationGrid::new(cfg.eta, cfg.universe().max(2.0), CLIP_EXPONENT)?;
        let src = RandomSource::new(seed).stream("dup");
        let stage1 = SketchTable::new(cfg.stage1_rows, cfg.stage1_buckets, src.child(1).seed())?;
        let stage2 =
            SketchTable::new(cfg.stage2_rows, cfg.stage2_slots as u64, src.child(2).seed())?;
        let gauss = vec![0.0; cfg.gauss_reps];
        Ok(Self {
            cfg,
            grid,
            src,
            stage1,
            stage2,
            gauss,
            cache: FxHashMap::default(),
            diag: Diagnostics::default(),
        })
    }

    pub fn config(&self) -> &DupConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &DiscretizationGrid {
        &self.grid
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diag
    }

    pub fn stage1(&self) -> &SketchTable<GridCounter> {
        &self.stage1
    }

    pub fn stage2(&self) -> &SketchTable<GridCounter> {
        &self.stage2
    }

    /// Running Gaussian projections of the duplicated vector.
    pub fn gauss(&self) -> &[f64] {
        &self.gauss
    }

    fn check(&self, index: u64) -> Result<()> {
        if index == 0 || index > self.cfg.n as u64 {
            return Err(Error::IndexOutOfRange { index, n: self.cfg.n });
        }
        Ok(())
    }

    fn key(&self, index: u64, rank: usize) -> u64 {
        (index - 1) * self.cfg.entries_per_index as u64 + rank as u64
    }

    fn index_src(&self, index: u64) -> RandomSource {
        self.src.child(index)
    }

    fn binned(&self) -> bool {
        match self.cfg.strategy {
            CountStrategy::Binned => true,
            CountStrategy::Multinomial => false,
            CountStrategy::Auto => self.cfg.copies() <= self.grid.cells() as u64,
        }
    }

    /// The coordinate's duplicates: top cells, the rest, and the squared mass.
    fn realize(&self, index: u64) -> Realization {
        let cfg = &self.cfg;
        let copies = cfg.copies();
        let mut cs = self.index_src(index).stream("cells");
        let t = cfg.entries_per_index;
        if self.binned() {
            // Same draws as the materializing path, kept in draw order.
            let mut cells = Vec::with_capacity(copies as usize);
            let mut clamps = 0;
            let mut sq_mass = 0.0;
            for _ in 0..copies {
                let (q, c) = duplicate_cell(&self.grid, cfg.p, &mut cs);
                clamps += c as u64;
                sq_mass += self.grid.value(q).powi(2);
                cells.push(q);
            }
            let mut top = Vec::with_capacity(t);
            for _ in 0..t.min(cells.len()) {
                let mut best = 0;
                for (k, &q) in cells.iter().enumerate() {
                    if q > cells[best] {
                        best = k;
                    }
                }
                top.push(cells.swap_remove(best));
            }
            return Realization { top, rest: Rest::Drawn(cells), sq_mass, clamps, ops: copies };
        }
        let mut counts =
            sample_duplicate_counts(copies, cfg.p, &self.grid, CountStrategy::Multinomial, &mut cs);
        let sq_mass =
            counts.cells.iter().map(|&(q, d)| d as f64 * self.grid.value(q).powi(2)).sum();
        let top = counts.pop_top(t);
        let mut cum = Vec::with_capacity(counts.cells.len());
        let mut total = 0u64;
        for &(_, d) in &counts.cells {
            total += d;
            cum.push(total);
        }
        Realization {
            top,
            rest: Rest::Counted { cells: counts.cells, cum },
            sq_mass,
            clamps: counts.clamp_events,
            ops: self.grid.cells() as u64,
        }
    }

    /// Footprint drawn from cell counts: binomial/multinomial occupancy, sampled
    /// stage-2 memberships, and one aggregated Gaussian per projection.
    pub fn fast_footprint(&self, index: u64) -> Footprint {
        let cfg = &self.cfg;
        let isrc = self.index_src(index);
        let Realization { top, rest, sq_mass, clamps, mut ops } = self.realize(index);
        let total = rest.len();
        let mut stage2 = Vec::new();
        if total > 0 {
            // Each (slot, duplicate) pair is a member independently with probability 1/L.
            let pairs = total * cfg.stage2_slots as u64;
            let prob = 1.0 / cfg.stage2_buckets as f64;
            let mut ids = Vec::new();
            let mut groups: Vec<(u32, i32)> = Vec::new();
            for row in 0..cfg.stage2_rows {
                let mut rs = isrc.child2(2, row as u64);
                let hits = binomial(pairs, prob, &mut rs);
                ops += 1 + hits;
                distinct_below(pairs, hits, &mut rs, &mut ids);
                groups.clear();
                groups.extend(ids.iter().map(|&id| ((id / total) as u32, rest.cell(id % total))));
                groups.sort_unstable();
                let mut k = 0;
                while k < groups.len() {
                    let mut end = k + 1;
                    while end < groups.len() && groups[end] == groups[k] {
                        end += 1;
                    }
                    let s = signed_count((end - k) as u64, &mut rs);
                    if s != 0 {
                        stage2.push((row as u32, groups[k].0, groups[k].1, s));
                    }
                    k = end;
                }
            }
        }

        let mut gs = isrc.stream("gauss");
        let scale = sq_mass.sqrt();
        let gauss = (0..cfg.gauss_reps).map(|_| scale * standard_normal(&mut gs)).collect();
        ops += cfg.gauss_reps as u64 + (top.len() * cfg.stage1_rows) as u64;
        Footprint { top, stage2, gauss, clamps, ops }
    }

    /// Cells of every duplicate, in draw order; shares the realization of the binned
    /// fast path.
    fn materialize(&self, index: u64) -> Result<(Vec<i32>, u64)> {
        let copies = self.cfg.copies();
        if copies > NAIVE_CAP {
            return Err(config(format!(
                "naive path refuses {copies} duplicates (cap {NAIVE_CAP})"
            )));
        }
        let mut cs = self.index_src(index).stream("cells");
        let mut clamps = 0;
        let cells = (0..copies)
            .map(|_| {
                let (q, c) = duplicate_cell(&self.grid, self.cfg.p, &mut cs);
                clamps += c as u64;
                q
            })
            .collect();
        Ok((cells, clamps))
    }

    /// Visits every stage-2 `(row, slot, cell, sign)` incidence of the materialized
    /// duplicates, and returns the top cells and per-projection Gaussian sums.
    fn walk_naive(
        &self,
        index: u64,
        mut visit: impl FnMut(u32, u32, i32, i64),
    ) -> Result<Footprint> {
        let cfg = &self.cfg;
        let (cells, clamps) = self.materialize(index)?;
        let mut order: Vec<usize> = (0..cells.len()).collect();
        // Largest cells first; ties by draw order.
        order.sort_by(|&a, &b| cells[b].cmp(&cells[a]).then(a.cmp(&b)));
        let t = cfg.entries_per_index.min(order.len());
        let top: Vec<i32> = order[..t].iter().map(|&k| cells[k]).collect();
        let mut rest: Vec<usize> = order[t..].to_vec();
        rest.sort_unstable();

        let isrc = self.index_src(index);
        let gap = GeometricGap::new(cfg.stage2_buckets);
        let mut ops = 0;
        for row in 0..cfg.stage2_rows {
            let base = isrc.child2(3, row as u64);
            for &k in &rest {
                let mut s = base.child(k as u64);
                let sign = s.sign();
                ops += 1;
                let mut pos = 0u64;
                loop {
                    pos += gap.sample(&mut s);
                    if pos > cfg.stage2_slots as u64 {
                        break;
                    }
                    visit(row as u32, (pos - 1) as u32, cells[k], sign);
                }
            }
        }
        let mut gauss = vec![0.0; cfg.gauss_reps];
        let gbase = isrc.stream("gauss-naive");
        for (k, &q) in cells.iter().enumerate() {
            let mut gs = gbase.child(k as u64);
            let v = self.grid.value(q);
            for g in &mut gauss {
                *g += standard_normal(&mut gs) * v;
            }
        }
        ops += (cells.len() * cfg.gauss_reps + t * cfg.stage1_rows) as u64;
        Ok(Footprint { top, stage2: Vec::new(), gauss, clamps, ops })
    }

    /// The materializing path's randomness, aggregated into a footprint.
    pub fn naive_footprint(&self, index: u64) -> Result<Footprint> {
        let mut agg: FxHashMap<(u32, u32, i32), i64> = FxHashMap::default();
        let mut fp =
            self.walk_naive(index, |r, s, q, g| *agg.entry((r, s, q)).or_default() += g)?;
        let mut stage2: Vec<_> =
            agg.into_iter().filter(|e| e.1 != 0).map(|((r, s, q), g)| (r, s, q, g)).collect();
        stage2.sort_unstable();
        fp.stage2 = stage2;
        Ok(fp)
    }

    /// Applies `delta` times a unit footprint.
    pub fn apply_footprint(&mut self, index: u64, delta: i64, fp: &Footprint) -> Result<()> {
        self.check(index)?;
        for (rank, &q) in fp.top.iter().enumerate() {
            let key = self.key(index, rank);
            self.stage1.update(key, (q, delta));
        }
        for &(row, slot, q, g) in &fp.stage2 {
            self.stage2.add_at(row as usize, slot as u64, (q, delta * g), 1);
        }
        for (a, g) in self.gauss.iter_mut().zip(&fp.gauss) {
            *a += delta as f64 * g;
        }
        self.diag.clip_events += fp.clamps;
        self.diag.update_ops += fp.ops;
        Ok(())
    }

    /// Fast update. Returns the cell of the coordinate's largest duplicate.
    pub fn update(&mut self, index: u64, delta: i64) -> Result<Option<i32>> {
        self.check(index)?;
        if let Some(fp) = self.cache.remove(&index) {
            self.apply_footprint(index, delta, &fp)?;
            let top = fp.top.first().copied();
            self.cache.insert(index, fp);
            return Ok(top);
        }
        let fp = self.fast_footprint(index);
        self.apply_footprint(index, delta, &fp)?;
        let top = fp.top.first().copied();
        if self.cfg.cache {
            self.cache.insert(index, fp);
        }
        Ok(top)
    }

    /// Materializing update: one table write per duplicate and bucket.
    pub fn update_naive(&mut self, index: u64, delta: i64) -> Result<Option<i32>> {
        self.check(index)?;
        let mut writes = Vec::new();
        let fp = self.walk_naive(index, |r, s, q, g| writes.push((r, s, q, g)))?;
        for (row, slot, q, g) in writes {
            self.stage2.add_at(row as usize, slot as u64, (q, delta * g), 1);
        }
        self.apply_footprint(index, delta, &fp)?;
        Ok(fp.top.first().copied())
    }

    /// Cell of the largest duplicate of `index`, replayed from the realization.
    pub fn top_cell(&self, index: u64) -> Option<i32> {
        if let Some(fp) = self.cache.get(&index) {
            return fp.top.first().copied();
        }
        self.realize(index).top.first().copied()
    }

    /// Exact stage-1 vector `v` for a mirrored `x`, keyed like the sketch.
    pub fn exact_entries(&self, x: &ExactVector) -> Vec<f64> {
        let t = self.cfg.entries_per_index;
        let mut out = vec![0.0; self.cfg.n * t];
        for i in 1..=self.cfg.n as u64 {
            let xi = x.get(i);
            if xi == 0 {
                continue;
            }
            for (rank, q) in self.realize(i).top.into_iter().enumerate() {
                out[self.key(i, rank) as usize] = xi as f64 * self.grid.value(q);
            }
        }
        out
    }

    pub fn stage1_estimate(&self, key: u64) -> Option<f64> {
        self.stage1.median_by(key, |c| c.value(&self.grid)).ok()
    }

    /// `R = (5/4) median_j |<phi_j, z>|`.
    pub fn l2_estimate(&self) -> f64 {
        l2_gaussian_estimate(&self.gauss)
    }

    /// Candidate search and randomized gap test.
    ///
    /// Entries whose stage-1 estimate exceeds `tau(R)` form `B` (largest first, at most
    /// `K`); member `b` takes stage-2 bucket `b` in every row, so its combined estimate is
    /// its stage-1 estimate plus the median of the stage-2 noise it would have collided
    /// with. The test passes when the top two combined estimates differ by more than
    /// `kappa R / (mu sqrt(L))`. A single candidate is compared against `tau`.
    pub fn query(&self, tau: impl Fn(f64) -> f64, mu: f64) -> DupQuery {
        let cfg = &self.cfg;
        let r_hat = self.l2_estimate();
        let tau_b = tau(r_hat);
        let threshold = cfg.gap_constant * r_hat / (mu * (cfg.stage2_buckets as f64).sqrt());
        let mut cand: Vec<(u64, f64)> = (0..(cfg.n * cfg.entries_per_index) as u64)
            .filter_map(|k| self.stage1_estimate(k).map(|v| (k, v)))
            .filter(|&(_, v)| v.abs() > tau_b)
            .collect();
        cand.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        cand.truncate(cfg.stage2_slots);
        let candidates = cand.len();
        let fail = DupQuery { r_hat, candidates, top: None, gap: 0.0, threshold, passed: false };
        if cand.is_empty() || !(r_hat > 0.0) {
            return fail;
        }
        let sgn = self.src.stream("candidate-signs");
        let mut noise = Vec::with_capacity(cfg.stage2_rows);
        let mut y: Vec<(u64, f64)> = cand
            .iter()
            .enumerate()
            .map(|(slot, &(key, v))| {
                noise.clear();
                for row in 0..cfg.stage2_rows {
                    let g = sgn.child2(row as u64, key).sign() as f64;
                    let c = self.stage2.counter(row, slot as u64);
                    noise.push(g * c.map_or(0.0, |c| c.value(&self.grid)));
                }
                (key, v + median(&mut noise))
            })
            .collect();
        y.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        let second = y.get(1).map_or(tau_b, |e| e.1.abs());
        let gap = y[0].1.abs() - second;
        DupQuery { top: Some(y[0]), gap, passed: gap > threshold, ..fail }
    }
}

struct Realization {
    top: Vec<i32>,
    rest: Rest,
    sq_mass: f64,
    clamps: u64,
    ops: u64,
}

/// Duplicates below the top `t`; the order is arbitrary but fixed by the seed.
enum Rest {
    Drawn(Vec<i32>),
    Counted { cells: Vec<(i32, u64)>, cum: Vec<u64> },
}

impl Rest {
    fn len(&self) -> u64 {
        match self {
            Rest::Drawn(v) => v.len() as u64,
            Rest::Counted { cum, .. } => cum.last().copied().unwrap_or(0),
        }
    }

    fn cell(&self, k: u64) -> i32 {
        match self {
            Rest::Drawn(v) => v[k as usize],
            Rest::Counted { cells, cum } => cells[cum.partition_point(|&c| c <= k)].0,
        }
    }
}

/// `k` distinct uniform values from `[0, range)` in ascending order (Floyd's method).
fn distinct_below(range: u64, k: u64, src: &mut RandomSource, out: &mut Vec<u64>) {
    out.clear();
    let k = k.min(range);
    for j in range - k..range {
        let t = src.below(j + 1);
        let v = match out.binary_search(&t) {
            Ok(_) => j,
            Err(_) => t,
        };
        let pos = out.binary_search(&v).unwrap_or_else(|p| p);
        out.insert(pos, v);
    }
}

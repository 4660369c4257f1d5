//! Report types and their text and JSON renderings.
//!
//! Everything except the `timing` sections is a function of the arguments and seed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use turnstile_samplers::subset::{Repetition, SubsetConfig, SubsetEstimate, SubsetState};
use turnstile_samplers::verify::{
    SamplerSpec, TrialSummary, UpdateBench, UpdateTiming, ValueCheck,
};
use turnstile_samplers::{Diagnostics, QuerySet, Stream, StreamConfig};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub fn emit<T: Serialize>(value: &T, format: Format, text: String) {
    let body = match format {
        Format::Text => text,
        Format::Json => serde_json::to_string_pretty(value).expect("reports serialize") + "\n",
    };
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = std::io::stdout().write_all(body.as_bytes());
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("reports serialize")
}

#[derive(Serialize)]
pub struct StreamEcho {
    pub path: Option<String>,
    pub n: usize,
    pub m: u64,
    pub max_delta: i64,
}

impl StreamEcho {
    pub fn new(s: &Stream, path: Option<&Path>) -> Self {
        Self {
            path: path.map(|p| p.display().to_string()),
            n: s.header.n,
            m: s.header.m,
            max_delta: s.header.max_delta,
        }
    }
}

pub fn text_stream(e: &StreamEcho, cfg: &StreamConfig) -> String {
    format!(
        "wrote {} updates over n = {} (M = {}, pattern {:?}, seed {}) to {}\n",
        e.m,
        e.n,
        e.max_delta,
        cfg.pattern,
        cfg.seed,
        e.path.as_deref().unwrap_or("-")
    )
}

#[derive(Clone, Copy, Serialize)]
pub struct Thresholds {
    pub max_tv: f64,
    pub max_fail_rate: f64,
}

#[derive(Serialize)]
pub struct Checks {
    pub tv: bool,
    pub fail_rate: bool,
    pub no_clips: bool,
}

#[derive(Serialize)]
pub struct RunReport {
    pub sampler: &'static str,
    pub config: SamplerSpec,
    pub stream: StreamEcho,
    pub seed: u64,
    pub workers: usize,
    pub trials: u64,
    pub successes: u64,
    pub fails: u64,
    pub fail_rate: f64,
    pub tv: f64,
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    pub thresholds: Thresholds,
    pub checks: Checks,
    pub pass: bool,
    pub diagnostics: Diagnostics,
    pub clamp_rate: f64,
    pub values: ValueCheck,
    pub timing: Option<UpdateTiming>,
}

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: &SamplerSpec,
        stream: StreamEcho,
        seed: u64,
        s: &TrialSummary,
        empirical: Vec<f64>,
        exact: Vec<f64>,
        tv: f64,
        thresholds: Thresholds,
        workers: usize,
        timing: Option<UpdateTiming>,
    ) -> Self {
        let checks = Checks {
            tv: s.successes > 0 && tv <= thresholds.max_tv,
            fail_rate: s.fail_rate() <= thresholds.max_fail_rate,
            no_clips: s.diag.clip_events == 0,
        };
        let pass = checks.tv && checks.fail_rate && checks.no_clips;
        Self {
            sampler: spec.id(),
            config: spec.clone(),
            stream,
            seed,
            workers,
            trials: s.trials,
            successes: s.successes,
            fails: s.fails,
            fail_rate: s.fail_rate(),
            tv,
            empirical,
            exact,
            thresholds,
            checks,
            pass,
            diagnostics: s.diag,
            clamp_rate: s.diag.clamp_rate(),
            values: s.values,
            timing,
        }
    }

    pub fn text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "sampler: {}", self.sampler);
        let _ = writeln!(o, "config: {}", json(&self.config));
        let _ = writeln!(o, "stream: {}", json(&self.stream));
        let _ = writeln!(o, "seed: {}", self.seed);
        let _ = writeln!(o, "workers: {}", self.workers);
        let _ = writeln!(o, "trials: {}", self.trials);
        let _ = writeln!(o, "successes: {}", self.successes);
        let _ = writeln!(
            o,
            "fail_rate: {:?} (max {:?}) {}",
            self.fail_rate,
            self.thresholds.max_fail_rate,
            verdict(self.checks.fail_rate)
        );
        let _ = writeln!(
            o,
            "tv: {:?} (max {:?}) {}",
            self.tv,
            self.thresholds.max_tv,
            verdict(self.checks.tv)
        );
        let _ = writeln!(o, "empirical: {:?}", self.empirical);
        let _ = writeln!(o, "exact: {:?}", self.exact);
        let d = &self.diagnostics;
        let _ = writeln!(o, "clip_events: {} {}", d.clip_events, verdict(self.checks.no_clips));
        let _ = writeln!(
            o,
            "clamped_acceptances: {} of {} (rate {:?})",
            d.clamped_acceptances, d.acceptance_draws, self.clamp_rate
        );
        let _ = writeln!(o, "update_ops: {}", d.update_ops);
        let v = &self.values;
        let _ = writeln!(
            o,
            "values: {} checked, {} exact, max relative error {:?}",
            v.checked, v.exact, v.max_relative_error
        );
        let _ = writeln!(o, "result: {}", verdict(self.pass));
        if let Some(t) = &self.timing {
            let _ = writeln!(
                o,
                "timing: {} updates, mean {:.0} ns, median {:.0} ns, max {:.0} ns",
                t.updates, t.mean_ns, t.median_ns, t.max_ns
            );
        }
        o
    }
}

#[derive(Serialize)]
pub struct SampleReport {
    pub sampler: &'static str,
    pub config: SamplerSpec,
    pub seed: u64,
    pub index: Option<u64>,
    pub value: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl SampleReport {
    pub fn text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "sampler: {}", self.sampler);
        let _ = writeln!(o, "config: {}", json(&self.config));
        let _ = writeln!(o, "seed: {}", self.seed);
        match self.index {
            Some(i) => {
                let _ = writeln!(o, "index: {i}");
                if let Some(v) = self.value {
                    let _ = writeln!(o, "value: {v:?}");
                }
            }
            None => {
                let _ = writeln!(o, "index: FAIL");
            }
        }
        let _ = writeln!(o, "diagnostics: {}", json(&self.diagnostics));
        o
    }
}

#[derive(Serialize)]
pub struct SubsetReport {
    pub config: SubsetConfig,
    pub seed: u64,
    pub query: Vec<u64>,
    pub repetitions: usize,
    pub hits: usize,
    pub fails: usize,
    pub low_confidence: bool,
    pub z: f64,
    pub exact: f64,
    pub relative_error: f64,
    pub max_relative_error: Option<f64>,
    pub pass: bool,
    pub diagnostics: Diagnostics,
    pub pairs: Option<Vec<Repetition>>,
}

impl SubsetReport {
    pub fn new(
        state: &SubsetState,
        seed: u64,
        est: SubsetEstimate,
        q: &QuerySet,
        exact: f64,
        max_rel: Option<f64>,
        pairs: bool,
    ) -> Self {
        let relative_error = if exact == 0.0 {
            if est.z == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (est.z - exact).abs() / exact
        };
        let pass = !est.low_confidence && max_rel.is_none_or(|m| relative_error <= m);
        Self {
            config: state.config.clone(),
            seed,
            query: q.iter().collect(),
            repetitions: est.repetitions,
            hits: est.hits,
            fails: est.fails,
            low_confidence: est.low_confidence,
            z: est.z,
            exact,
            relative_error,
            max_relative_error: max_rel,
            pass,
            diagnostics: state.diag,
            pairs: pairs.then(|| state.pairs.clone()),
        }
    }

    pub fn text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "config: {}", json(&self.config));
        let _ = writeln!(o, "seed: {}", self.seed);
        let _ = writeln!(o, "query: {:?}", self.query);
        let _ = writeln!(
            o,
            "repetitions: {} (hits {}, fails {})",
            self.repetitions, self.hits, self.fails
        );
        if self.low_confidence {
            let _ = writeln!(o, "warning: more than 10% of repetitions failed");
        }
        let _ = writeln!(o, "z: {:?}", self.z);
        let _ = writeln!(o, "exact: {:?}", self.exact);
        let _ = match self.max_relative_error {
            Some(m) => writeln!(o, "relative_error: {:?} (max {m:?})", self.relative_error),
            None => writeln!(o, "relative_error: {:?}", self.relative_error),
        };
        let _ = writeln!(o, "diagnostics: {}", json(&self.diagnostics));
        if let Some(pairs) = &self.pairs {
            for (r, p) in pairs.iter().enumerate() {
                let idx = p.index.map_or("FAIL".to_string(), |i| i.to_string());
                let _ = writeln!(o, "pair {r}: {idx} {:?}", p.fp);
            }
        }
        let _ = writeln!(o, "result: {}", verdict(self.pass));
        o
    }
}

#[derive(Serialize)]
pub struct BenchRow {
    #[serde(flatten)]
    pub bench: UpdateBench,
    /// Measured ratio at least half the predicted one.
    pub pass: bool,
}

#[derive(Serialize)]
pub struct BenchTiming {
    pub c: u32,
    pub fast_ns_per_update: f64,
    pub naive_ns_per_update: f64,
}

#[derive(Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub p: f64,
    pub eps: f64,
    pub rows: Vec<BenchRow>,
    pub pass: bool,
    pub timing: Option<Vec<BenchTiming>>,
}

impl BenchReport {
    pub fn new(seed: u64, p: f64, eps: f64, benches: Vec<UpdateBench>, timing: bool) -> Self {
        let timing = timing.then(|| {
            benches
                .iter()
                .map(|b| BenchTiming {
                    c: b.c,
                    fast_ns_per_update: b.fast_ns,
                    naive_ns_per_update: b.naive_ns,
                })
                .collect()
        });
        let rows: Vec<BenchRow> = benches
            .into_iter()
            .map(|b| BenchRow { pass: b.ratio >= b.predicted / 2.0, bench: b })
            .collect();
        let pass = rows.iter().all(|r| r.pass);
        Self { seed, p, eps, rows, pass, timing }
    }

    pub fn text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "seed: {}  p: {:?}  eps: {:?}", self.seed, self.p, self.eps);
        let _ = writeln!(
            o,
            "{:>3} {:>10} {:>6} {:>5} {:>12} {:>10} {:>10} {:>12}  check",
            "c", "copies", "cells", "rows", "naive_ops", "fast_ops", "ratio", "predicted"
        );
        for r in &self.rows {
            let b = &r.bench;
            let _ = writeln!(
                o,
                "{:>3} {:>10} {:>6} {:>5} {:>12} {:>10} {:>10.4} {:>12.6}  {}",
                b.c,
                b.copies,
                b.grid_cells,
                b.stage2_rows,
                b.naive_ops,
                b.fast_ops,
                b.ratio,
                b.predicted,
                verdict(r.pass)
            );
        }
        let _ = writeln!(o, "result: {}", verdict(self.pass));
        if let Some(t) = &self.timing {
            for t in t {
                let _ = writeln!(
                    o,
                    "timing c={}: fast {:.0} ns/update, naive {:.0} ns/update",
                    t.c, t.fast_ns_per_update, t.naive_ns_per_update
                );
            }
        }
        o
    }
}

//! `tsamp`: generate streams, run samplers, check their output laws, estimate subset
//! moments, and compare update paths.
//!
//! Exit status: 0 when every threshold in the report holds, 1 when one does not, 2 on
//! any error (bad flags, unreadable or malformed files, invalid configuration).

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use turnstile_samplers::approx::UpdatePath;
use turnstile_samplers::gsampler::DEFAULT_REPETITION_CONSTANT;
use turnstile_samplers::perfect::Route;
use turnstile_samplers::subset::{SubsetBackend, SubsetConfig, SubsetState, DEFAULT_C_Z};
use turnstile_samplers::verify::{
    bench_update, run_trials, time_updates, trial_seed, SamplerSpec, StopRule,
};
use turnstile_samplers::{
    generate_stream, read_stream, tv_distance, write_stream, Error, Pattern, QuerySet, Stream,
    StreamConfig,
};

use report::{BenchReport, Format, RunReport, SampleReport, StreamEcho, SubsetReport, Thresholds};

#[derive(Parser)]
#[command(name = "tsamp", version, about = "Samplers and moment estimators over turnstile streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream (text, or binary for a `.bin` path).
    GenStream(GenArgs),
    /// Run independent sampler instances and compare against the exact law.
    Verify(VerifyArgs),
    /// Draw one sample.
    Sample(SampleArgs),
    /// Estimate the p-th moment of a query subset.
    EstimateSubset(SubsetArgs),
    /// Compare fast and materializing update paths across duplication exponents.
    BenchUpdate(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// Seed for all randomness.
    #[arg(long, env = "TSAMP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: i64,
    #[arg(long)]
    m: u64,
    /// Largest update magnitude `M`.
    #[arg(long, default_value_t = 10)]
    max_delta: i64,
    /// uniform-random, zipfian, single-heavy or insert-then-cancel.
    #[arg(long, default_value = "uniform-random")]
    pattern: Pattern,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerKind {
    L0,
    Lp,
    Poly,
    Approx,
    Log,
    Cap,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Auto,
    Integer,
    Fractional,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Fast,
    Naive,
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, value_enum)]
    sampler: SamplerKind,
    /// Moment exponent for lp, approx and cap.
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    /// Perfect L_p route.
    #[arg(long, value_enum, default_value = "auto")]
    route: RouteArg,
    /// Polynomial term `alpha:exponent`; repeat for each term.
    #[arg(long = "term", value_parser = parse_term)]
    terms: Vec<(f64, f64)>,
    /// Strict bound on polynomial coefficients; defaults to the largest plus one.
    #[arg(long)]
    bound: Option<f64>,
    /// Distortion of the approximate sampler.
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Independent instances of the approximate sampler.
    #[arg(long, default_value_t = 1)]
    instances: usize,
    #[arg(long, value_enum, default_value = "fast")]
    path: PathArg,
    /// Cap threshold `T`.
    #[arg(long)]
    threshold: Option<f64>,
    /// Repetition constant of the log and cap samplers.
    #[arg(long, default_value_t = DEFAULT_REPETITION_CONSTANT)]
    c_g: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    stream: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Run exactly this many trials.
    #[arg(long, conflicts_with = "successes")]
    trials: Option<u64>,
    /// Run until this many successes.
    #[arg(long, default_value_t = 1000)]
    successes: u64,
    /// Trial cap when running until a success count.
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    max_tv: f64,
    #[arg(long, default_value_t = 0.01)]
    max_fail: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Leave out per-update wall-clock statistics.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    stream: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Perfect,
    Approx,
}

#[derive(Args)]
struct SubsetArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Query set file, one coordinate per line.
    #[arg(long)]
    query: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    /// Lower bound on the query set's share of F_p.
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_C_Z)]
    c_z: f64,
    #[arg(long, value_enum, default_value = "perfect")]
    backend: BackendArg,
    /// Fail (exit 1) when the estimate is off the exact value by more than this
    /// relative error.
    #[arg(long)]
    max_rel_error: Option<f64>,
    /// Include every repetition's (index, F_p estimate) pair.
    #[arg(long)]
    pairs: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 4)]
    n: i64,
    #[arg(long, default_value_t = 64)]
    m: u64,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Duplication exponents to compare.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    c: Vec<u32>,
    /// Leave out wall-clock figures.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    common: Common,
}

fn parse_term(s: &str) -> Result<(f64, f64), String> {
    let (a, e) = s.split_once(':').ok_or("expected alpha:exponent")?;
    let a = a.trim().parse().map_err(|_| format!("bad coefficient {a:?}"))?;
    let e = e.trim().parse().map_err(|_| format!("bad exponent {e:?}"))?;
    Ok((a, e))
}

impl SamplerArgs {
    fn spec(&self) -> Result<SamplerSpec, Error> {
        Ok(match self.sampler {
            SamplerKind::L0 => SamplerSpec::L0,
            SamplerKind::Lp => SamplerSpec::Lp {
                p: self.p,
                route: match self.route {
                    RouteArg::Auto => Route::Auto,
                    RouteArg::Integer => Route::Integer,
                    RouteArg::Fractional => Route::Fractional,
                },
            },
            SamplerKind::Poly => {
                if self.terms.is_empty() {
                    return Err(Error::Config("poly needs at least one --term".into()));
                }
                let top = self.terms.iter().map(|t| t.0).fold(0.0, f64::max);
                SamplerSpec::Polynomial {
                    terms: self.terms.clone(),
                    bound: self.bound.unwrap_or(top + 1.0),
                }
            }
            SamplerKind::Approx => SamplerSpec::Approx {
                p: self.p,
                eps: self.eps,
                instances: self.instances,
                path: match self.path {
                    PathArg::Fast => UpdatePath::Fast,
                    PathArg::Naive => UpdatePath::Naive,
                },
            },
            SamplerKind::Log => SamplerSpec::Log { c_g: self.c_g },
            SamplerKind::Cap => {
                let threshold =
                    self.threshold.ok_or_else(|| Error::Config("cap needs --threshold".into()))?;
                SamplerSpec::Cap { threshold, p: self.p, c_g: self.c_g }
            }
        })
    }
}

fn load(path: &Path) -> Result<Stream, Error> {
    read_stream(path).map_err(|e| match e {
        Error::Io(msg) => Error::Io(format!("{}: {msg}", path.display())),
        e => e,
    })
}

/// `Ok(true)` when all thresholds pass.
fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Command::GenStream(a) => {
            let cfg = StreamConfig {
                n: a.n,
                m: a.m,
                max_delta: a.max_delta,
                pattern: a.pattern,
                seed: a.common.seed,
            };
            let s = generate_stream(&cfg)?;
            write_stream(&a.out, &s)?;
            let echo = StreamEcho::new(&s, Some(&a.out));
            report::emit(&echo, a.common.format, report::text_stream(&echo, &cfg));
            Ok(true)
        }
        Command::Verify(a) => {
            let stream = load(&a.stream)?;
            let spec = a.sampler.spec()?;
            let prep = spec.prepare(&stream.header)?;
            let x = stream.mirror()?;
            let exact = spec.exact_distribution(&x)?;
            let seed = a.common.seed;
            let stop = match a.trials {
                Some(t) => StopRule::Trials(t),
                None => StopRule::Successes {
                    target: a.successes,
                    max_trials: a.max_trials.unwrap_or(a.successes.saturating_mul(4).max(100)),
                },
            };
            let summary = run_trials(&prep, &stream, seed, stop, a.workers)?;
            let empirical = summary.empirical();
            let tv = if summary.successes == 0 { 1.0 } else { tv_distance(&empirical, &exact)? };
            let timing = if a.no_timing {
                None
            } else {
                Some(time_updates(&prep, &stream, trial_seed(seed, u64::MAX))?)
            };
            let thresholds = Thresholds { max_tv: a.max_tv, max_fail_rate: a.max_fail };
            let r = RunReport::new(
                &spec,
                StreamEcho::new(&stream, Some(&a.stream)),
                seed,
                &summary,
                empirical,
                exact,
                tv,
                thresholds,
                a.workers,
                timing,
            );
            report::emit(&r, a.common.format, r.text());
            Ok(r.pass)
        }
        Command::Sample(a) => {
            let stream = load(&a.stream)?;
            let spec = a.sampler.spec()?;
            let prep = spec.prepare(&stream.header)?;
            let d = prep.draw(&stream, a.common.seed)?;
            let r = SampleReport {
                sampler: spec.id(),
                config: spec.clone(),
                seed: a.common.seed,
                index: d.outcome.index(),
                value: d.outcome.value(),
                diagnostics: d.diag,
            };
            report::emit(&r, a.common.format, r.text());
            Ok(true)
        }
        Command::EstimateSubset(a) => {
            let stream = load(&a.stream)?;
            let text = std::fs::read_to_string(&a.query)
                .map_err(|e| Error::Io(format!("{}: {e}", a.query.display())))?;
            let q = QuerySet::parse(&text)?;
            if let Some(bad) = q.iter().find(|&i| i == 0 || i > stream.n() as u64) {
                return Err(Error::IndexOutOfRange { index: bad, n: stream.n() });
            }
            let mut cfg = SubsetConfig::new(stream.n(), a.p, a.eps, a.alpha);
            cfg.c_z = a.c_z;
            cfg.backend = match a.backend {
                BackendArg::Perfect => SubsetBackend::Perfect,
                BackendArg::Approx => SubsetBackend::Approx,
            };
            let state = SubsetState::from_stream(&cfg, a.common.seed, &stream.updates)?;
            let est = state.query(&q);
            let exact = stream.mirror()?.subset_moment(a.p, &q);
            let r =
                SubsetReport::new(&state, a.common.seed, est, &q, exact, a.max_rel_error, a.pairs);
            report::emit(&r, a.common.format, r.text());
            Ok(r.pass)
        }
        Command::BenchUpdate(a) => {
            let cfg = StreamConfig {
                n: a.n,
                m: a.m,
                max_delta: 10,
                pattern: Pattern::UniformRandom,
                seed: a.common.seed,
            };
            let stream = generate_stream(&cfg)?;
            let rows =
                a.c.iter()
                    .map(|&c| bench_update(a.p, a.eps, c, &stream, a.common.seed))
                    .collect::<Result<Vec<_>, _>>()?;
            let r = BenchReport::new(a.common.seed, a.p, a.eps, rows, !a.no_timing);
            report::emit(&r, a.common.format, r.text());
            Ok(r.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("tsamp: {e}");
            ExitCode::from(2)
        }
    }
}

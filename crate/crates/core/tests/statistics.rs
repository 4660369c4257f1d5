use turnstile_samplers::gsampler::{GSampler, RejectionPlan};
use turnstile_samplers::perfect::{PerfectConfig, PerfectLpSampler, PolyConfig, PolynomialSampler};
use turnstile_samplers::subset::{SubsetBackend, SubsetConfig, SubsetState};
use turnstile_samplers::verify::{run_trials, trial_seed, SamplerSpec, StopRule};
use turnstile_samplers::{GFunction, QuerySet, Sketch, Stream};

fn small_stream() -> Stream {
    Stream::from_values(&[4, -2, 0, 7, 1, -5]).unwrap()
}

#[test]
fn lazy_replay_matches_streaming_samplers() {
    let s = small_stream();
    let lp = PerfectConfig::new(6, 3.0);
    let poly = PolyConfig::new(
        6,
        &GFunction::Polynomial { terms: vec![(1.0, 2.0), (0.5, 3.0)], bound: 2.0 },
    )
    .unwrap();
    let plan = RejectionPlan::cap(20.0, 2.0, 6.0).unwrap();
    for seed in 0..6 {
        let mut a = PerfectLpSampler::new(lp.clone(), seed).unwrap();
        a.ingest(&s.updates).unwrap();
        let lazy = PerfectLpSampler::sample_stream(&lp, seed, &s.updates).unwrap();
        assert_eq!(a.sample().unwrap().outcome, lazy.outcome, "L_p seed {seed}");

        let mut b = PolynomialSampler::new(poly.clone(), seed).unwrap();
        b.ingest(&s.updates).unwrap();
        let lazy = PolynomialSampler::sample_stream(&poly, seed, &s.updates).unwrap();
        assert_eq!(b.sample().unwrap().outcome, lazy.outcome, "polynomial seed {seed}");

        let mut g = GSampler::new(plan.clone(), 6, seed).unwrap();
        g.ingest(&s.updates).unwrap();
        let lazy = GSampler::sample_stream(&plan, 6, seed, &s.updates).unwrap();
        assert_eq!(g.sample().unwrap().outcome, lazy.outcome, "G seed {seed}");
    }
}

#[test]
fn subset_estimate_is_unbiased() {
    let s = small_stream();
    let x = s.mirror().unwrap();
    let q = QuerySet::new([1, 4]);
    let truth = x.subset_moment(3.0, &q);
    let cfg = SubsetConfig::new(6, 3.0, 0.5, 0.5);
    let runs = 150;
    let mut mean = 0.0;
    for r in 0..runs {
        let st = SubsetState::from_stream(&cfg, trial_seed(21, r), &s.updates).unwrap();
        let e = st.query(&q);
        assert!(!e.low_confidence);
        mean += e.z / truth / runs as f64;
    }
    // Standard error of the mean ratio is below 0.02 here.
    assert!((mean - 1.0).abs() <= cfg.eps / 3.0, "mean ratio {mean}");
}

#[test]
fn subset_approx_backend_runs() {
    let s = small_stream();
    let mut cfg = SubsetConfig::new(6, 3.0, 0.5, 0.5);
    cfg.backend = SubsetBackend::Approx;
    cfg.approx_instances = 2;
    let st = SubsetState::from_stream(&cfg, 3, &s.updates).unwrap();
    assert_eq!(st.pairs.len(), cfg.repetitions());
    let all = st.query(&QuerySet::new(1..=6));
    assert!(all.z >= 0.0 && all.hits + all.fails == all.repetitions);
}

#[test]
fn g_sampler_rarely_fails() {
    let s = small_stream();
    let spec = SamplerSpec::cap(20.0, 2.0);
    let prep = spec.prepare(&s.header).unwrap();
    let sum = run_trials(&prep, &s, 5, StopRule::Trials(2000), 1).unwrap();
    // With R = ceil(6 H / Q_low) repetitions, P[FAIL] is about e^{-6} plus L0 failures.
    assert!(sum.fail_rate() <= 0.01, "fail rate {}", sum.fail_rate());
}

#[test]
fn zero_stream_always_fails() {
    let s = Stream::from_values(&[0, 0, 0]).unwrap();
    for spec in [SamplerSpec::L0, SamplerSpec::lp(3.0), SamplerSpec::log()] {
        let prep = spec.prepare(&s.header).unwrap();
        let sum = run_trials(&prep, &s, 1, StopRule::Trials(5), 1).unwrap();
        assert_eq!(sum.fails, 5, "{}", spec.id());
    }
}

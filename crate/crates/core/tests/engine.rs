use channelwave_core::adversary::AdversaryPolicy;
use channelwave_core::engine::{run, sweep, EngineMode, JammingSpec, Protocol, SimConfig};
use channelwave_core::metrics;
use channelwave_core::trace::EpisodeEnd;
use channelwave_core::OutcomeKind;

fn mixed_adversaries(n: u64) -> Vec<AdversaryPolicy> {
    vec![
        AdversaryPolicy::burst(n, 0),
        AdversaryPolicy::burst(n, 17),
        AdversaryPolicy::spread(n, 4 * n),
        AdversaryPolicy::adaptive(n),
        AdversaryPolicy::PoissonLike {
            rate: 0.05,
            until: 20 * n,
        },
        AdversaryPolicy::JammingLowerBound { n, c: 4 },
    ]
}

#[test]
fn reruns_are_identical() {
    for adv in mixed_adversaries(128) {
        let cfg = SimConfig::main_protocol(adv, 20_000, 99);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }
}

#[test]
fn shorter_horizon_reproduces_the_prefix() {
    for protocol in [Protocol::Main, Protocol::ExpBackoff, Protocol::PureBackoff] {
        for adv in mixed_adversaries(64) {
            let long = run(&SimConfig::new(protocol, adv.clone(), 12_000, 5)).unwrap();
            let short = run(&SimConfig::new(protocol, adv, 3_001, 5)).unwrap();
            assert_eq!(&long.rows[..3_001], &short.rows[..], "{protocol:?}");
        }
    }
}

#[test]
fn different_seeds_diverge() {
    let base = SimConfig::main_protocol(AdversaryPolicy::burst(64, 0), 4096, 0);
    let diverged = (0..100)
        .filter(|&s| run(&base.with_seed(2 * s)).unwrap().rows != run(&base.with_seed(2 * s + 1)).unwrap().rows)
        .count();
    assert!(diverged >= 99);
}

#[test]
fn sweep_of_one_is_run() {
    let cfg = SimConfig::main_protocol(AdversaryPolicy::spread(50, 500), 5000, 3);
    let mut out = sweep(std::slice::from_ref(&cfg));
    assert_eq!(out.pop().unwrap().unwrap(), run(&cfg).unwrap());
}

#[test]
fn sweep_reports_failures_per_index() {
    let good = SimConfig::main_protocol(AdversaryPolicy::burst(8, 0), 1000, 1);
    let mut bad = good.clone();
    bad.c = 0;
    let out = sweep(&[good.clone(), bad, good.with_seed(2)]);
    assert!(out[0].is_ok() && out[1].is_err() && out[2].is_ok());
}

#[test]
fn no_property_violations() {
    for seed in 0..10 {
        for adv in mixed_adversaries(256) {
            let mut cfg = SimConfig::main_protocol(adv.clone(), 40_000, seed);
            let t = run(&cfg).unwrap();
            assert_eq!(t.violations.total(), 0, "{adv:?} seed {seed}: {:?}", t.violations);
            cfg.mode = EngineMode::PerSlotReference;
            cfg.horizon = 6_000;
            let t = run(&cfg).unwrap();
            assert_eq!(
                t.violations.total(),
                0,
                "per-slot {adv:?} seed {seed}: {:?}",
                t.violations
            );
        }
    }
}

#[test]
fn episodes_are_disjoint_and_well_formed() {
    for seed in 0..20 {
        let cfg = SimConfig::main_protocol(AdversaryPolicy::spread(300, 3000), 60_000, seed);
        let t = run(&cfg).unwrap();
        assert!(!t.episodes.is_empty());
        for w in t.episodes.windows(2) {
            assert!(w[0].end_step <= w[1].start_step);
        }
        for ep in &t.episodes {
            assert!(ep.participants >= 1);
            let start = t.outcome(ep.start_step).unwrap();
            assert!(start.kind.is_success() && start.channel == ep.channel);
            if ep.end == EpisodeEnd::JamChannelSuccess {
                let end = t.outcome(ep.end_step).unwrap();
                assert!(end.kind.is_success() && end.channel == ep.channel.other());
            }
            let l = metrics::truncated_batch_length(ep, 1.0 / 64.0);
            assert!(l == 0 || l == ep.length());
        }
    }
}

/// A pure backoff population consults only c-backoff schedules, which both
/// engine modes draw identically.
#[test]
fn modes_agree_exactly_for_pure_backoff() {
    for seed in 0..20 {
        let mut cfg = SimConfig::new(Protocol::PureBackoff, AdversaryPolicy::spread(40, 700), 5000, seed);
        let a = run(&cfg).unwrap();
        cfg.mode = EngineMode::PerSlotReference;
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
    }
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Skip sampling and per-slot coins give the same distribution of the
/// observables; compared through their means over independent seeds.
#[test]
fn modes_agree_statistically() {
    let cases = [
        (Protocol::Main, AdversaryPolicy::burst(64, 0), 4000u64),
        (Protocol::ExpBackoff, AdversaryPolicy::burst(64, 0), 2000),
        (
            Protocol::PolyBackoff { gamma: 0.7 },
            AdversaryPolicy::spread(40, 400),
            2000,
        ),
    ];
    for (protocol, adv, horizon) in cases {
        let runs = 300;
        let collect = |mode: EngineMode, offset: u64| -> (Vec<f64>, Vec<f64>) {
            (0..runs)
                .map(|s| {
                    let mut cfg = SimConfig::new(protocol, adv.clone(), horizon, s + offset);
                    cfg.mode = mode;
                    let t = run(&cfg).unwrap();
                    (t.total_successes() as f64, t.total_attempts() as f64)
                })
                .unzip()
        };
        let (sa, aa) = collect(EngineMode::EventDriven, 0);
        let (sb, ab) = collect(EngineMode::PerSlotReference, 10_000);
        for (x, y) in [(sa, sb), (aa, ab)] {
            let (mx, dx) = mean_and_sd(&x);
            let (my, dy) = mean_and_sd(&y);
            let se = ((dx * dx + dy * dy) / runs as f64).sqrt();
            assert!(
                (mx - my).abs() <= 4.0 * se + 1e-9,
                "{protocol:?}: {mx} vs {my} (se {se})"
            );
        }
    }
}

#[test]
fn lone_player_in_every_protocol_succeeds() {
    for protocol in [
        Protocol::Main,
        Protocol::PureBackoff,
        Protocol::ExpBackoff,
        Protocol::PolyBackoff { gamma: 0.5 },
    ] {
        for seed in 0..20 {
            let t = run(&SimConfig::new(protocol, AdversaryPolicy::burst(1, 3), 10_000, seed)).unwrap();
            let successes: Vec<_> = t.success_steps().collect();
            assert_eq!(successes.len(), 1);
            let first_tx = t.rows.iter().position(|r| r.broadcasters > 0).unwrap() as u64;
            assert_eq!(successes[0], first_tx);
        }
    }
}

#[test]
fn jammed_prefix_blocks_every_broadcast() {
    // with c = 1 the jam schedule covers at least steps 1..=n/2
    let mut hits = 0;
    for seed in 0..50 {
        let mut cfg = SimConfig::new(Protocol::ExpBackoff, AdversaryPolicy::burst(3, 1), 17, seed);
        cfg.jamming = Some(JammingSpec { n: 16, c: 1 });
        let t = run(&cfg).unwrap();
        for r in &t.rows[1..=8] {
            if r.broadcasters > 0 {
                assert_eq!(r.kind, OutcomeKind::Jammed);
                hits += 1;
            }
        }
    }
    assert!(hits > 0);
}

#[test]
fn batch_start_opens_an_episode_at_step_zero() {
    let adv = AdversaryPolicy::BatchStart {
        n: 128,
        injected: 8,
        over_steps: 4096,
    };
    let t = run(&SimConfig::main_protocol(adv.clone(), 4097, 4)).unwrap();
    let ep = t.episodes[0];
    assert_eq!((ep.start_step, ep.participants), (0, 128));
    assert_eq!(t.rows[0].arrivals, 128);
    assert_eq!(t.violations.total(), 0);
    assert!(run(&SimConfig::new(Protocol::ExpBackoff, adv, 100, 0)).is_err());
}

#[test]
fn main_protocol_clears_a_burst() {
    for seed in 0..5 {
        let n = 1024;
        let t = run(&SimConfig::main_protocol(AdversaryPolicy::burst(n, 0), 64 * n, seed)).unwrap();
        assert_eq!(t.final_population(), 0);
        let active = metrics::active_slots(&t, 64 * n - 1);
        assert!(active <= 16 * n, "{active}");
    }
}

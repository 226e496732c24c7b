//! Seed-swept statistical checks with pinned thresholds.
//!
//! Each suite produces one [`Criterion`]: a pass/fail verdict and a line of
//! the numbers behind it. Seed counts default to the pinned values and can
//! be lowered for quick looks, at the price of power.

use std::fmt;
use std::time::Instant;

use channelwave_core::adversary::{spread_count, AdversaryPolicy};
use channelwave_core::channel::{observe, resolve_slot};
use channelwave_core::engine::{run, EngineMode, Protocol, SimConfig};
use channelwave_core::metrics::{self, TailPoint};
use channelwave_core::oracle::{expected_backoff_attempts, prob_exactly_one, prob_exactly_zero, BernoulliVector};
use channelwave_core::protocols::{
    backoff_probability, backoff_transmit_probability, batch_decide, check_balanced, exp_backoff_decide,
    exp_backoff_probability, jam_decide, jam_probability, BackoffState, BatchState, JamState,
};
use channelwave_core::rng::{RngPlan, StreamId, StreamRng};
use channelwave_core::{ChannelId, PlayerId};
use rand::Rng;
use rayon::prelude::*;

use crate::output;

/// Growth allowed in a median from the smallest to the largest `n`.
pub const FLAT_GROWTH: f64 = 1.25;
/// Largest acceptable active-slot constant.
pub const K_LIMIT: f64 = 64.0;
/// Required drop of exponential backoff's throughput across the range.
pub const EXP_DROP: f64 = 0.5;
/// Required fraction of passing runs for the per-run suites.
pub const PASS_RATE: f64 = 0.99;
/// Largest acceptable log-log slope of the truncated batch-length tail.
pub const TAIL_SLOPE_LIMIT: f64 = -1.0;
pub const TAIL_RANGE: (u64, u64) = (32, 1024);
/// Constant in the lower bounds on `Pr[X = 0]` and `Pr[X = 1]`.
pub const ORACLE_CONSTANT: f64 = 1.0 / 8.0;
pub const ORACLE_VECTORS: usize = 10_000;
pub const MONTE_CARLO_SAMPLES: usize = 1_000_000;
pub const MONTE_CARLO_SIGMAS: f64 = 3.0;
/// Smallest acceptable probability of no success under jamming.
pub const JAM_FAILURE_FLOOR: f64 = 0.05;
/// Time budget of the determinism and invariant suite.
pub const DETERMINISM_SECONDS: f64 = 60.0;

pub const SCALING_NS: [u64; 4] = [1 << 8, 1 << 10, 1 << 12, 1 << 14];
pub const JAMMING_NS: [u64; 3] = [1 << 8, 1 << 10, 1 << 12];
pub const BATCH_NS: [u64; 2] = [256, 1024];

#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Throughput,
    ExpDegrades,
    Energy,
    FirstSuccess,
    BatchSuccesses,
    TruncatedTail,
    OracleConsistency,
    Jamming,
    Balanced,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Throughput,
        Suite::ExpDegrades,
        Suite::Energy,
        Suite::FirstSuccess,
        Suite::BatchSuccesses,
        Suite::TruncatedTail,
        Suite::OracleConsistency,
        Suite::Jamming,
        Suite::Balanced,
        Suite::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Throughput => "throughput",
            Suite::ExpDegrades => "exp-degrades",
            Suite::Energy => "energy",
            Suite::FirstSuccess => "first-success",
            Suite::BatchSuccesses => "batch-successes",
            Suite::TruncatedTail => "truncated-tail",
            Suite::OracleConsistency => "oracle-consistency",
            Suite::Jamming => "jamming",
            Suite::Balanced => "balanced",
            Suite::Determinism => "determinism",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Pinned number of seeds (runs per sweep point, or total runs).
    pub fn default_seeds(self) -> usize {
        match self {
            Suite::Throughput | Suite::ExpDegrades | Suite::Energy => 50,
            Suite::FirstSuccess => 1000,
            Suite::BatchSuccesses | Suite::Jamming => 500,
            Suite::TruncatedTail => 2000,
            Suite::OracleConsistency => 1,
            Suite::Balanced => 1000,
            Suite::Determinism => 20,
        }
    }

    /// A warning when `seeds` is below the pinned count.
    pub fn underpowered(self, seeds: usize) -> Option<String> {
        let pinned = self.default_seeds();
        (seeds < pinned).then(|| {
            format!(
                "warning: suite {} with {seeds} seed(s) is underpowered (thresholds are pinned for {pinned})",
                self.name()
            )
        })
    }

    pub fn run(self, seeds: Option<usize>, parallel: usize) -> Criterion {
        let k = seeds.unwrap_or_else(|| self.default_seeds()).max(1);
        match self {
            Suite::Throughput => throughput(&burst_sweep(&SCALING_NS, k, parallel)),
            Suite::Energy => energy(&burst_sweep(&SCALING_NS, k, parallel)),
            Suite::ExpDegrades => exp_degrades(&SCALING_NS, k, parallel),
            Suite::FirstSuccess => first_success(k, parallel),
            Suite::BatchSuccesses => batch_successes(&BATCH_NS, k, parallel),
            Suite::TruncatedTail => truncated_tail(1024, k, parallel),
            Suite::OracleConsistency => oracle_consistency(ORACLE_VECTORS, MONTE_CARLO_SAMPLES),
            Suite::Jamming => jamming(&JAMMING_NS, k, parallel),
            Suite::Balanced => balanced(k, parallel),
            Suite::Determinism => determinism(k, parallel),
        }
    }
}

/// `f` over `items` on `parallel` threads; results in input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], parallel: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel <= 1 {
        return items.iter().map(f).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("thread pool")
        .install(|| items.par_iter().map(f).collect())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn run_ok(cfg: &SimConfig) -> channelwave_core::SimTrace {
    run(cfg).expect("suite configurations are valid")
}

/// Per-run numbers of the main protocol on a burst of `n` at step 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurstRun {
    pub n: u64,
    pub active_per_n: f64,
    pub energy: f64,
    pub leftover: u64,
    pub violations: u64,
}

/// Main protocol, default constants, `Burst(n, 0)`, horizon `64 n`.
pub fn burst_sweep(ns: &[u64], seeds: usize, parallel: usize) -> Vec<BurstRun> {
    let configs: Vec<SimConfig> = ns
        .iter()
        .flat_map(|&n| {
            (0..seeds as u64).map(move |s| SimConfig::main_protocol(AdversaryPolicy::burst(n, 0), 64 * n, s))
        })
        .collect();
    par_map(&configs, parallel, |cfg| {
        let n = cfg.adversary.planned_arrivals().unwrap();
        let t = run_ok(cfg);
        let log = (n as f64).log2();
        BurstRun {
            n,
            active_per_n: metrics::active_slots(&t, cfg.horizon - 1) as f64 / n as f64,
            energy: t.total_attempts() as f64 / (n as f64 * log * log),
            leftover: t.final_population(),
            violations: t.violations.total(),
        }
    })
}

fn by_n<T: Copy>(runs: &[BurstRun], n: u64, f: impl Fn(&BurstRun) -> T) -> Vec<T> {
    runs.iter().filter(|r| r.n == n).map(f).collect()
}

fn ns_of(runs: &[BurstRun]) -> Vec<u64> {
    let mut ns: Vec<u64> = runs.iter().map(|r| r.n).collect();
    ns.dedup();
    ns
}

fn fmt_list(xs: &[(u64, f64)]) -> String {
    xs.iter()
        .map(|(n, x)| format!("{n}:{x:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Median active slots per player stays flat in `n`, and one constant `K`
/// bounds every run's active slots per player.
pub fn throughput(runs: &[BurstRun]) -> Criterion {
    let ns = ns_of(runs);
    let medians: Vec<(u64, f64)> = ns
        .iter()
        .map(|&n| (n, median(&by_n(runs, n, |r| r.active_per_n))))
        .collect();
    let k = max(&runs.iter().map(|r| r.active_per_n).collect::<Vec<_>>()).ceil();
    let growth = medians.last().unwrap().1 / medians[0].1;
    let leftover: u64 = runs.iter().map(|r| r.leftover).sum();
    let violations: u64 = runs.iter().map(|r| r.violations).sum();
    Criterion {
        name: "constant implicit throughput",
        pass: growth <= FLAT_GROWTH && k <= K_LIMIT,
        detail: format!(
            "median active/n {}; growth {growth:.4} (limit {FLAT_GROWTH}); K = {k} (limit {K_LIMIT}); runs {}; players left {leftover}; property violations {violations}",
            fmt_list(&medians),
            runs.len()
        ),
    }
}

/// Attempts per `n log2^2 n` stay bounded and their median flat in `n`.
pub fn energy(runs: &[BurstRun]) -> Criterion {
    let ns = ns_of(runs);
    let medians: Vec<(u64, f64)> = ns.iter().map(|&n| (n, median(&by_n(runs, n, |r| r.energy)))).collect();
    let maxima: Vec<(u64, f64)> = ns.iter().map(|&n| (n, max(&by_n(runs, n, |r| r.energy)))).collect();
    let bound = max(&maxima.iter().map(|m| m.1).collect::<Vec<_>>());
    let growth = medians.last().unwrap().1 / medians[0].1;
    Criterion {
        name: "energy",
        pass: growth <= FLAT_GROWTH && bound.is_finite(),
        detail: format!(
            "median attempts/(n log2^2 n) {}; max {}; bound {bound:.4}; growth {growth:.4} (limit {FLAT_GROWTH})",
            fmt_list(&medians),
            fmt_list(&maxima)
        ),
    }
}

/// Exponential backoff against the adaptive adversary, horizon `64 n`:
/// median implicit throughput must fall strictly at every step of `ns` and
/// halve across the range.
pub fn exp_degrades(ns: &[u64], seeds: usize, parallel: usize) -> Criterion {
    let configs: Vec<(u64, SimConfig)> = ns
        .iter()
        .flat_map(|&n| {
            (0..seeds as u64).map(move |s| {
                (
                    n,
                    SimConfig::new(Protocol::ExpBackoff, AdversaryPolicy::adaptive(n), 64 * n, s),
                )
            })
        })
        .collect();
    let thr = par_map(&configs, parallel, |(n, cfg)| {
        (*n, metrics::implicit_throughput(&run_ok(cfg), cfg.horizon - 1).ratio)
    });
    let medians: Vec<(u64, f64)> = ns
        .iter()
        .map(|&n| {
            (
                n,
                median(&thr.iter().filter(|t| t.0 == n).map(|t| t.1).collect::<Vec<_>>()),
            )
        })
        .collect();
    let monotone = medians.windows(2).all(|w| w[1].1 < w[0].1);
    let ratio = medians.last().unwrap().1 / medians[0].1;
    Criterion {
        name: "exponential backoff degrades",
        pass: monotone && ratio <= EXP_DROP,
        detail: format!(
            "median throughput {}; strictly decreasing {monotone}; last/first {ratio:.4} (limit {EXP_DROP}); seeds {seeds}",
            fmt_list(&medians)
        ),
    }
}

fn rate_detail(hits: usize, runs: usize) -> String {
    let (lo, hi) = metrics::wilson_interval(hits as u64, runs as u64);
    format!("{hits}/{runs} = {:.4} [{lo:.4}, {hi:.4}]", hits as f64 / runs as f64)
}

/// Pure c-backoff with `c = 4`, 64 players spread over `tau = 1024` steps:
/// at least two successes in `(tau / c^2, tau]`.
pub fn first_success(seeds: usize, parallel: usize) -> Criterion {
    let (c, tau) = (4u64, 1024u64);
    let lo = tau / (c * c);
    let need = 2usize;
    let configs: Vec<SimConfig> = (0..seeds as u64)
        .map(|s| SimConfig::new(Protocol::PureBackoff, AdversaryPolicy::spread(64, tau), tau + 1, s))
        .collect();
    let hits = par_map(&configs, parallel, |cfg| {
        run_ok(cfg).success_steps().filter(|&s| s > lo && s <= tau).count() >= need
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    Criterion {
        name: "first success of c-backoff",
        pass: hits as f64 >= PASS_RATE * seeds as f64,
        detail: format!(
            "runs with >= {need} successes in ({lo}, {tau}]: {} (need {PASS_RATE})",
            rate_detail(hits, seeds)
        ),
    }
}

/// `n` players start in batch execution with `n / c1` phase-1 arrivals
/// spread over the window; at least `n / 10` successes within `c1 n`
/// batch-channel steps.
pub fn batch_successes(ns: &[u64], seeds: usize, parallel: usize) -> Criterion {
    let c1 = 16u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for &n in ns {
        let window = 2 * c1 * n;
        let adv = AdversaryPolicy::BatchStart {
            n,
            injected: n / c1,
            over_steps: window,
        };
        let configs: Vec<SimConfig> = (0..seeds as u64)
            .map(|s| SimConfig::main_protocol(adv.clone(), window + 1, s))
            .collect();
        let counts = par_map(&configs, parallel, |cfg| run_ok(cfg).total_successes());
        let hits = counts.iter().filter(|&&k| k * 10 >= n).count();
        let least = counts.iter().min().copied().unwrap_or(0);
        pass &= hits as f64 >= PASS_RATE * seeds as f64;
        parts.push(format!("n={n}: {} (fewest {least})", rate_detail(hits, seeds)));
    }
    Criterion {
        name: "batch successes",
        pass,
        detail: format!("runs with >= n/10 successes: {} (need {PASS_RATE})", parts.join("; ")),
    }
}

/// Arrival mixes for the batch-length tail.
pub fn mixed_policies(n: u64) -> [AdversaryPolicy; 4] {
    [
        AdversaryPolicy::burst(n, 0),
        AdversaryPolicy::spread(n, 4 * n),
        AdversaryPolicy::adaptive(n),
        AdversaryPolicy::PoissonLike {
            rate: 0.05,
            until: 20 * n,
        },
    ]
}

/// Raw and truncated batch lengths of `runs` main-protocol runs cycling
/// through [`mixed_policies`], `theta = 1 / (4 c1)`.
pub fn batch_lengths(n: u64, runs: usize, parallel: usize) -> Vec<(u64, u64)> {
    let policies = mixed_policies(n);
    let configs: Vec<SimConfig> = (0..runs as u64)
        .map(|i| SimConfig::main_protocol(policies[i as usize % policies.len()].clone(), 64 * n, i))
        .collect();
    par_map(&configs, parallel, |cfg| {
        let theta = 1.0 / (4 * cfg.c1) as f64;
        run_ok(cfg)
            .episodes
            .iter()
            .map(|ep| (ep.length(), metrics::truncated_batch_length(ep, theta)))
            .collect::<Vec<_>>()
    })
    .concat()
}

fn tail_detail(points: &[TailPoint]) -> String {
    points
        .iter()
        .filter(|p| p.t >= TAIL_RANGE.0 && p.t <= TAIL_RANGE.1)
        .map(|p| format!("{}:{:.3e}[{:.3e},{:.3e}]", p.t, p.prob, p.lo, p.hi))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Log-log slope of the survival function of truncated batch lengths over
/// [`TAIL_RANGE`]. When no truncated length reaches the range the slope is
/// undefined; the tail then passes iff the Wilson upper bound on
/// `Pr[l >= t_lo]` is below `t_lo^limit`, the power law the slope stands for.
/// The raw (untruncated) length tail is reported alongside.
pub fn truncated_tail(n: u64, runs: usize, parallel: usize) -> Criterion {
    let name = "truncated batch-length tail";
    let lengths = batch_lengths(n, runs, parallel);
    let truncated: Vec<u64> = lengths.iter().map(|l| l.1).collect();
    let raw: Vec<u64> = lengths.iter().map(|l| l.0).collect();
    let (Ok(points), Ok(raw_points)) = (metrics::survival_tail(&truncated), metrics::survival_tail(&raw)) else {
        return Criterion {
            name,
            pass: false,
            detail: "no batch episodes".to_string(),
        };
    };
    let (lo, hi) = TAIL_RANGE;
    let slope = metrics::tail_slope(&points, lo, hi);
    let raw_slope = metrics::tail_slope(&raw_points, lo, hi);
    let nonzero = truncated.iter().filter(|&&l| l > 0).count();
    let reach = truncated.iter().filter(|&&l| l >= lo).count() as u64;
    let (_, reach_hi) = metrics::wilson_interval(reach, truncated.len() as u64);
    let envelope = (lo as f64).powf(TAIL_SLOPE_LIMIT);
    let (pass, slope_text) = match slope {
        Some(s) => (s <= TAIL_SLOPE_LIMIT, format!("{s:.4}")),
        None => (
            reach_hi <= envelope,
            format!(
                "undefined (Pr[l >= {lo}] = {reach}/{} <= {reach_hi:.3e} vs {lo}^{TAIL_SLOPE_LIMIT} = {envelope:.3e})",
                truncated.len()
            ),
        ),
    };
    let fmt_slope = |s: Option<f64>| s.map(|s| format!("{s:.4}")).unwrap_or_else(|| "undefined".to_string());
    Criterion {
        name,
        pass,
        detail: format!(
            "slope over [{lo}, {hi}] {slope_text} (limit {TAIL_SLOPE_LIMIT}); episodes {}; nonzero truncated {nonzero}; survival with Wilson 95%: {}; raw lengths: longest {}, slope {}, survival {}",
            truncated.len(),
            tail_detail(&points),
            raw.iter().max().copied().unwrap_or(0),
            fmt_slope(raw_slope),
            tail_detail(&raw_points)
        ),
    }
}

enum Primitive {
    Batch(u64),
    Jam(u64, u64),
    Exp(u64),
    Backoff(u64, u64),
}

impl Primitive {
    fn probability(&self) -> f64 {
        match *self {
            Primitive::Batch(i) => BatchState {
                channel: ChannelId::A,
                step: i,
            }
            .probability(),
            Primitive::Jam(i, c2) => jam_probability(i, c2),
            Primitive::Exp(t) => exp_backoff_probability(t),
            Primitive::Backoff(c, tau) => backoff_transmit_probability(c, tau),
        }
    }

    fn draw(&self, rng: &mut StreamRng) -> bool {
        match *self {
            Primitive::Batch(i) => batch_decide(
                &BatchState {
                    channel: ChannelId::A,
                    step: i,
                },
                rng,
            ),
            Primitive::Jam(i, c2) => jam_decide(
                &JamState {
                    channel: ChannelId::B,
                    step: i,
                    c2,
                },
                rng,
            ),
            Primitive::Exp(t) => exp_backoff_decide(t, rng),
            Primitive::Backoff(c, tau) => {
                let mut b = BackoffState::new(c, 0).expect("c >= 2");
                b.decide(tau, rng).expect("fresh schedule")
            }
        }
    }
}

fn monte_carlo_vectors() -> Vec<Vec<Primitive>> {
    vec![
        (2..=9).map(Primitive::Batch).collect(),
        (4..=8)
            .map(Primitive::Exp)
            .chain((6..=9).map(|i| Primitive::Jam(i, 1)))
            .collect(),
        [5, 9, 17, 33, 70, 200]
            .into_iter()
            .map(|tau| Primitive::Backoff(4, tau))
            .collect(),
        vec![
            Primitive::Batch(2),
            Primitive::Exp(5),
            Primitive::Jam(12, 1),
            Primitive::Backoff(4, 13),
        ],
    ]
}

/// Exact lower bounds on random vectors, and Monte Carlo counts drawn with
/// the protocols' own decision functions against the exact oracle values.
pub fn oracle_consistency(vectors: usize, samples: usize) -> Criterion {
    let mut rng = RngPlan::new(0x0ac1e).stream(StreamId::Aux(0));
    let mut bound_failures = 0usize;
    let mut worst_zero = f64::INFINITY;
    let mut worst_one = f64::INFINITY;
    for _ in 0..vectors {
        let len = rng.gen_range(0..=32usize);
        let p: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..=0.5)).collect();
        let v = BernoulliVector::new(p).expect("probabilities in range");
        let mean = v.expectation();
        let zero = prob_exactly_zero(&v);
        let one = prob_exactly_one(&v);
        let zero_floor = 2f64.powf(-2.0 * mean);
        let one_floor = ORACLE_CONSTANT * mean.min(zero_floor);
        if zero < zero_floor - 1e-12 || one < one_floor - 1e-12 || zero + one > 1.0 + 1e-12 {
            bound_failures += 1;
        }
        worst_zero = worst_zero.min(zero / zero_floor);
        if one_floor > 0.0 {
            worst_one = worst_one.min(one / one_floor);
        }
    }

    let mut worst_sigma = 0.0f64;
    let mut mc_failures = 0usize;
    for (k, prims) in monte_carlo_vectors().iter().enumerate() {
        let v = BernoulliVector::new(prims.iter().map(Primitive::probability).collect())
            .expect("primitive probabilities <= 1/2");
        let mut rng = RngPlan::new(0x0ac1e).stream(StreamId::Aux(1 + k as u64));
        let (mut zeros, mut ones) = (0u64, 0u64);
        for _ in 0..samples {
            match prims.iter().filter(|p| p.draw(&mut rng)).count() {
                0 => zeros += 1,
                1 => ones += 1,
                _ => {}
            }
        }
        for (count, exact) in [(zeros, prob_exactly_zero(&v)), (ones, prob_exactly_one(&v))] {
            let sd = (exact * (1.0 - exact) / samples as f64).sqrt();
            let z = (count as f64 / samples as f64 - exact).abs() / sd;
            worst_sigma = worst_sigma.max(z);
            if z > MONTE_CARLO_SIGMAS {
                mc_failures += 1;
            }
        }
    }
    let attempts_ok = expected_backoff_attempts(4, 64).max <= 12;
    Criterion {
        name: "oracle equivalence",
        pass: bound_failures == 0 && mc_failures == 0 && attempts_ok,
        detail: format!(
            "{vectors} vectors: bound failures {bound_failures} (constant {ORACLE_CONSTANT}), min Pr[0]/floor {worst_zero:.4}, min Pr[1]/floor {worst_one:.4}; Monte Carlo {samples} samples x {} vectors: worst deviation {worst_sigma:.3} sigma (limit {MONTE_CARLO_SIGMAS}), failures {mc_failures}",
            monte_carlo_vectors().len()
        ),
    }
}

/// The two-stage jamming construction with `c = 4`: for the main protocol
/// and exponential backoff, the chance of no success within the first `n`
/// steps stays at least [`JAM_FAILURE_FLOOR`].
pub fn jamming(ns: &[u64], seeds: usize, parallel: usize) -> Criterion {
    let mut pass = true;
    let mut parts = Vec::new();
    for protocol in [Protocol::Main, Protocol::ExpBackoff] {
        for &n in ns {
            let configs: Vec<SimConfig> = (0..seeds as u64)
                .map(|s| SimConfig::new(protocol, AdversaryPolicy::JammingLowerBound { n, c: 4 }, n + 1, s))
                .collect();
            let silent = par_map(&configs, parallel, |cfg| run_ok(cfg).first_success().is_none())
                .into_iter()
                .filter(|&x| x)
                .count();
            pass &= silent as f64 >= JAM_FAILURE_FLOOR * seeds as f64;
            parts.push(format!(
                "{} n={n}: {}",
                output::protocol_name(protocol),
                rate_detail(silent, seeds)
            ));
        }
    }
    Criterion {
        name: "jamming demonstration",
        pass,
        detail: format!(
            "Pr[no success in first n steps] {} (floor {JAM_FAILURE_FLOOR})",
            parts.join("; ")
        ),
    }
}

/// Secondary contention profile for the balanced-execution check: constant
/// `hi` up to `tau`, then decaying as `(s / tau)^(-1/6)` down to `lo` at
/// `d^6 tau`.
fn secondary_contention(s: u64, tau: u64, hi: f64) -> f64 {
    if s <= tau {
        hi
    } else {
        hi * (s as f64 / tau as f64).powf(-1.0 / 6.0)
    }
}

/// Primary c-backoff players arrive spread over `c^(k+5)` steps while `m`
/// secondary players run a `(c, c^k)`-balanced execution; at least one
/// success must land in `(c^k, c^(k+5)]`.
pub fn balanced(seeds: usize, parallel: usize) -> Criterion {
    let (c, k) = (4u64, 3u32);
    let tau = c.pow(k);
    let end = c.pow(k + 5);
    let m = 64u64;
    let d = c as f64;
    let hi = (tau as f64).log2() / d;
    let profile: Vec<(u64, f64)> = (0..=end)
        .map(|s| (m, secondary_contention(s, tau, hi) / m as f64))
        .collect();
    let report = check_balanced(&profile, d, tau);
    let primaries = tau;
    let arrivals: Vec<u64> = (0..end)
        .flat_map(|s| std::iter::repeat(s).take(spread_count(primaries, end, s) as usize))
        .collect();
    let seed_list: Vec<u64> = (0..seeds as u64).collect();
    let hits = par_map(&seed_list, parallel, |&seed| {
        let plan = RngPlan::new(seed);
        let mut sec_rng = plan.stream(StreamId::Aux(0));
        let mut players: Vec<(BackoffState, StreamRng, u64)> = arrivals
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut rng = plan.stream(StreamId::Player(i as u64));
                let mut b = BackoffState::new(c, a).expect("c >= 2");
                let next = b.next_broadcast(a, &mut rng).expect("fresh schedule");
                (b, rng, next)
            })
            .collect();
        for s in 0..=end {
            let (mm, q) = profile[s as usize];
            let u: f64 = sec_rng.gen();
            let p0 = (1.0 - q).powf(mm as f64);
            let p1 = mm as f64 * q * (1.0 - q).powf(mm as f64 - 1.0);
            let secondary = if u < p0 {
                0
            } else if u < p0 + p1 {
                1
            } else {
                2
            };
            let mut primary = 0;
            for (b, rng, next) in players.iter_mut() {
                if *next == s {
                    primary += 1;
                    *next = b.next_broadcast(s, rng).expect("forward query");
                }
            }
            if secondary + primary == 1 && s > tau {
                return true;
            }
        }
        false
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    Criterion {
        name: "first success amid a balanced execution",
        pass: report.balanced() && hits as f64 >= PASS_RATE * seeds as f64,
        detail: format!(
            "c={c} k={k}: execution balanced {} ({report:?}); runs with a success in ({tau}, {end}]: {} (need {PASS_RATE})",
            report.balanced(),
            rate_detail(hits, seeds)
        ),
    }
}

fn determinism_configs(seeds: usize) -> Vec<SimConfig> {
    let n = 128;
    let mut out = Vec::new();
    for s in 0..seeds as u64 {
        for protocol in [
            Protocol::Main,
            Protocol::PureBackoff,
            Protocol::ExpBackoff,
            Protocol::PolyBackoff { gamma: 0.8 },
        ] {
            for adv in mixed_policies(n) {
                out.push(SimConfig::new(protocol, adv, 4000, s));
            }
        }
        let mut jam = SimConfig::main_protocol(AdversaryPolicy::JammingLowerBound { n, c: 4 }, 4000, s);
        jam.mode = EngineMode::PerSlotReference;
        out.push(jam);
    }
    out
}

/// Byte-identical reruns (sequential and parallel), the backoff attempt cap
/// and probability bracket, property counters, and indistinguishable
/// failures, within [`DETERMINISM_SECONDS`].
pub fn determinism(seeds: usize, parallel: usize) -> Criterion {
    let started = Instant::now();
    let configs = determinism_configs(seeds);
    let bytes = |cfg: &SimConfig| {
        let t = run_ok(cfg);
        (
            output::trace_csv(&t),
            output::metrics_json("check", cfg, &t),
            t.violations.total(),
        )
    };
    let first = par_map(&configs, 1, bytes);
    let second = par_map(&configs, parallel.max(2), bytes);
    let identical = first.iter().zip(&second).filter(|(a, b)| a == b).count();
    let violations: u64 = first.iter().map(|x| x.2).sum();

    let mut cap_failures = 0u64;
    for c in [2u64, 4, 9, 16] {
        for seed in 0..seeds as u64 {
            let mut rng = RngPlan::new(seed).stream(StreamId::Aux(c));
            let mut b = BackoffState::new(c, 0).expect("c >= 2");
            let mut at = 0;
            let mut count = 0u64;
            let horizon = 1u64 << 16;
            loop {
                let next = b.next_broadcast(at, &mut rng).expect("forward query");
                if next > horizon {
                    break;
                }
                count += 1;
                at = next;
                let cap = c as f64 * (next as f64).ln() / (c as f64).ln();
                if count as f64 > cap + 1e-9 {
                    cap_failures += 1;
                }
            }
        }
    }

    let mut bracket_failures = 0u64;
    for c in [4u64, 9, 16] {
        for tau in c + 1..=c.pow(4) {
            let p = backoff_probability(c, tau);
            if p < 1.0 / tau as f64 || p > 2.0 * c as f64 / tau as f64 {
                bracket_failures += 1;
            }
        }
    }

    let mut leaks = 0u64;
    for step in 0..64u64 {
        for me in 0..3u64 {
            let silent = observe(&resolve_slot(&[], false, step), PlayerId(me));
            let collision = observe(&resolve_slot(&[PlayerId(0), PlayerId(1)], false, step), PlayerId(me));
            let jammed = observe(&resolve_slot(&[PlayerId(me)], true, step), PlayerId(me));
            leaks += (silent != collision || silent != jammed) as u64;
        }
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = identical == configs.len()
        && violations == 0
        && cap_failures == 0
        && bracket_failures == 0
        && leaks == 0
        && secs < DETERMINISM_SECONDS;
    Criterion {
        name: "determinism and invariants",
        pass,
        detail: format!(
            "identical reruns {identical}/{}; property violations {violations}; attempt-cap failures {cap_failures}; probability-bracket failures {bracket_failures}; observation leaks {leaks}; {secs:.1} s (limit {DETERMINISM_SECONDS} s)",
            configs.len()
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
        assert_eq!(Suite::from_name("nope"), None);
    }

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<u64> = (0..100).collect();
        assert_eq!(par_map(&xs, 4, |x| x * 2), par_map(&xs, 1, |x| x * 2));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn monte_carlo_primitives_are_valid_vectors() {
        for v in monte_carlo_vectors() {
            BernoulliVector::new(v.iter().map(Primitive::probability).collect()).unwrap();
        }
    }

    #[test]
    fn small_suites_pass() {
        assert!(oracle_consistency(500, 20_000).pass);
        assert!(first_success(50, 1).pass);
        let c = determinism(1, 2);
        assert!(c.pass, "{c}");
    }

    #[test]
    fn underpowered_warning() {
        assert!(Suite::FirstSuccess.underpowered(1).is_some());
        assert!(Suite::FirstSuccess.underpowered(1000).is_none());
    }
}

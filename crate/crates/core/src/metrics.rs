//! Metrics computed from a finished [`SimTrace`].

use alloc::vec::Vec;
use core::fmt;

use crate::trace::{BatchEpisode, SimTrace};

/// Arrivals and active slots up to a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThroughputReport {
    pub t: u64,
    /// Arrivals in steps `<= t`.
    pub arrivals: u64,
    /// Active steps `<= t`.
    pub active: u64,
    /// `arrivals / active`; infinite when no step was active.
    pub ratio: f64,
}

impl ThroughputReport {
    pub fn is_sentinel(&self) -> bool {
        self.active == 0
    }
}

fn prefix(trace: &SimTrace, t: u64) -> &[crate::trace::StepRecord] {
    let end = (t as usize).saturating_add(1).min(trace.rows.len());
    &trace.rows[..end]
}

/// Number of steps `<= t` with at least one player in the system.
pub fn active_slots(trace: &SimTrace, t: u64) -> u64 {
    prefix(trace, t).iter().filter(|r| r.is_active()).count() as u64
}

pub fn implicit_throughput(trace: &SimTrace, t: u64) -> ThroughputReport {
    let rows = prefix(trace, t);
    let arrivals = rows.iter().map(|r| r.arrivals).sum();
    let active = rows.iter().filter(|r| r.is_active()).count() as u64;
    let ratio = if active == 0 {
        f64::INFINITY
    } else {
        arrivals as f64 / active as f64
    };
    ThroughputReport {
        t,
        arrivals,
        active,
        ratio,
    }
}

/// Throughput at each checkpoint, in one pass.
pub fn throughput_series(trace: &SimTrace, checkpoints: &[u64]) -> Vec<ThroughputReport> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let (mut arrivals, mut active) = (0u64, 0u64);
    let mut next = 0usize;
    for &t in checkpoints {
        let end = (t as usize).saturating_add(1).min(trace.rows.len());
        for r in &trace.rows[next.min(end)..end] {
            arrivals += r.arrivals;
            active += r.is_active() as u64;
        }
        next = next.max(end);
        let ratio = if active == 0 {
            f64::INFINITY
        } else {
            arrivals as f64 / active as f64
        };
        out.push(ThroughputReport {
            t,
            arrivals,
            active,
            ratio,
        });
    }
    out
}

/// Whether every trailing window of `j >= k` steps ending at `t` holds at
/// most `eps * j` arrivals. Windows reach back to step 0 at most.
pub fn k_smooth(trace: &SimTrace, t: u64, k: u64, eps: f64) -> bool {
    let rows = prefix(trace, t);
    let mut sum = 0u64;
    for (j, r) in rows.iter().rev().enumerate() {
        sum += r.arrivals;
        let j = j as u64 + 1;
        if j >= k && sum as f64 > eps * j as f64 {
            return false;
        }
    }
    true
}

/// Zero if the episode's successes or arrivals reach `theta` times its
/// length, the length otherwise.
pub fn truncated_batch_length(episode: &BatchEpisode, theta: f64) -> u64 {
    let l = episode.length();
    let bar = theta * l as f64;
    if l == 0 || episode.successes as f64 >= bar || episode.arrivals as f64 >= bar {
        0
    } else {
        l
    }
}

/// A maximal run of active steps with no batch operation in progress.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonBatchRun {
    pub start: u64,
    pub length: u64,
    pub arrivals: u64,
}

/// Runs of active steps outside batch operations. A run also ends when the
/// population turns over completely, i.e. at a step where nobody present
/// was there the step before.
pub fn nonbatch_runs(trace: &SimTrace) -> Vec<NonBatchRun> {
    let n = trace.rows.len();
    let mut in_batch = alloc::vec![false; n];
    for ep in &trace.episodes {
        let lo = (ep.start_step as usize + 1).min(n);
        let hi = (ep.end_step as usize + 1).min(n);
        for b in &mut in_batch[lo..hi] {
            *b = true;
        }
    }
    let mut runs = Vec::new();
    let mut cur: Option<NonBatchRun> = None;
    for (s, r) in trace.rows.iter().enumerate() {
        let inside = r.is_active() && !in_batch[s];
        let fresh = r.population_before == 0;
        if !inside || fresh {
            if let Some(run) = cur.take() {
                runs.push(run);
            }
        }
        if inside {
            let run = cur.get_or_insert(NonBatchRun {
                start: s as u64,
                length: 0,
                arrivals: 0,
            });
            run.length += 1;
            run.arrivals += r.arrivals;
        }
    }
    runs.extend(cur);
    runs
}

/// Truncated lengths of [`nonbatch_runs`]: zero when a run has at least
/// `theta` arrivals per step.
pub fn nonbatch_run_lengths(trace: &SimTrace, theta: f64) -> Vec<u64> {
    nonbatch_runs(trace)
        .into_iter()
        .map(|r| {
            if r.arrivals as f64 >= theta * r.length as f64 {
                0
            } else {
                r.length
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttemptsSummary {
    pub total_attempts: u64,
    /// Infinite when nobody has arrived.
    pub attempts_per_arrival: f64,
}

pub fn attempts_summary(trace: &SimTrace, t: u64) -> AttemptsSummary {
    let rows = prefix(trace, t);
    let total_attempts: u64 = rows.iter().map(|r| r.broadcasters).sum();
    let arrivals: u64 = rows.iter().map(|r| r.arrivals).sum();
    let attempts_per_arrival = if arrivals == 0 {
        f64::INFINITY
    } else {
        total_attempts as f64 / arrivals as f64
    };
    AttemptsSummary {
        total_attempts,
        attempts_per_arrival,
    }
}

/// Longest time any player spent in the system (up to the horizon for
/// players still present).
pub fn max_sojourn(trace: &SimTrace) -> u64 {
    trace
        .players
        .iter()
        .map(|p| p.departure.unwrap_or(trace.horizon.saturating_sub(1)) - p.arrival + 1)
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptySample;

impl fmt::Display for EmptySample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("empty sample")
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EmptySample {}

/// One point of an empirical survival function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailPoint {
    pub t: u64,
    /// Samples `>= t`.
    pub count: u64,
    pub prob: f64,
    /// Wilson 95% interval.
    pub lo: f64,
    pub hi: f64,
}

const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Grid points: every integer up to 16, then steps of `2^(1/4)`, up to `max`
/// (at least 16).
pub fn tail_grid(max: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = (1..=16).collect();
    let mut x = 16.0f64;
    loop {
        x *= libm::pow(2.0, 0.25);
        let t = libm::round(x) as u64;
        if t > max {
            break;
        }
        if grid.last() != Some(&t) {
            grid.push(t);
        }
    }
    grid
}

/// Empirical `Pr[X >= t]` on [`tail_grid`], with Wilson 95% intervals.
pub fn survival_tail(samples: &[u64]) -> Result<Vec<TailPoint>, EmptySample> {
    if samples.is_empty() {
        return Err(EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as u64;
    let max = *sorted.last().unwrap();
    Ok(tail_grid(max)
        .into_iter()
        .map(|t| {
            let below = sorted.partition_point(|&x| x < t) as u64;
            let count = n - below;
            let (lo, hi) = wilson_interval(count, n);
            TailPoint {
                t,
                count,
                prob: count as f64 / n as f64,
                lo,
                hi,
            }
        })
        .collect())
}

/// Least-squares slope of `log2 Pr[X >= t]` against `log2 t` over the grid
/// points in `[t_lo, t_hi]` with nonzero probability. `None` with fewer than
/// two such points.
pub fn tail_slope(points: &[TailPoint], t_lo: u64, t_hi: u64) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.t >= t_lo && p.t <= t_hi && p.count > 0)
        .map(|p| (libm::log2(p.t as f64), libm::log2(p.prob)))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{OutcomeKind, PlayerId};
    use crate::trace::{EpisodeEnd, PropertyViolations, StepRecord};
    use crate::ChannelId;
    use rand::Rng;

    fn trace(rows: &[(u64, u64, OutcomeKind)]) -> SimTrace {
        let mut pop = 0;
        let rows = rows
            .iter()
            .map(|&(arrivals, broadcasters, kind)| {
                let r = StepRecord {
                    kind,
                    arrivals,
                    population_before: pop,
                    broadcasters,
                };
                pop += arrivals;
                if kind.is_success() {
                    pop -= 1;
                }
                r
            })
            .collect::<Vec<_>>();
        SimTrace {
            seed: 0,
            horizon: rows.len() as u64,
            rows,
            players: Vec::new(),
            episodes: Vec::new(),
            violations: PropertyViolations::default(),
        }
    }

    const S: OutcomeKind = OutcomeKind::Silent;

    fn episode(l: u64, successes: u64, arrivals: u64) -> BatchEpisode {
        BatchEpisode {
            start_step: 10,
            end_step: 10 + 2 * l,
            channel: ChannelId::A,
            participants: 5,
            successes,
            arrivals,
            end: EpisodeEnd::Horizon,
        }
    }

    #[test]
    fn throughput_examples() {
        let mut rows = vec![(50, 0, S)];
        rows.extend((1..100).map(|_| (0, 0, S)));
        let t = trace(&rows);
        let r = implicit_throughput(&t, 99);
        assert_eq!((r.arrivals, r.active), (50, 100));
        assert_eq!(r.ratio, 0.5);
        assert_eq!(active_slots(&t, 99), 100);

        let empty = trace(&[(0, 0, S); 20]);
        let r = implicit_throughput(&empty, 19);
        assert!(r.is_sentinel() && r.ratio.is_infinite());
        assert_eq!(active_slots(&empty, 19), 0);
    }

    #[test]
    fn single_player_for_ten_steps() {
        let mut rows = vec![(0, 0, S); 5];
        rows.push((1, 0, S));
        rows.extend([(0, 0, S); 8]);
        rows.push((0, 1, OutcomeKind::Success(PlayerId(0))));
        rows.extend([(0, 0, S); 5]);
        let t = trace(&rows);
        assert_eq!(active_slots(&t, 100), 10);
        let series = throughput_series(&t, &[0, 5, 14, 19]);
        assert_eq!(series.iter().map(|r| r.active).collect::<Vec<_>>(), [0, 1, 10, 10]);
        for r in &series {
            assert_eq!(*r, implicit_throughput(&t, r.t));
        }
    }

    #[test]
    fn smoothness() {
        let quiet = trace(&[(0, 0, S); 50]);
        assert!((0..50).all(|t| k_smooth(&quiet, t, 1, 0.01)));
        let mut rows = vec![(0, 0, S); 30];
        rows[20].0 = 10;
        let burst = trace(&rows);
        assert!(!k_smooth(&burst, 20, 4, 0.5));
        assert!(k_smooth(&burst, 20, 21, 0.5));
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncated_batch_length(&episode(100, 50, 0), 0.1), 0);
        assert_eq!(truncated_batch_length(&episode(100, 2, 3), 0.1), 100);
        assert_eq!(truncated_batch_length(&episode(100, 0, 10), 0.1), 0);
        assert_eq!(truncated_batch_length(&episode(0, 0, 0), 0.1), 0);
    }

    #[test]
    fn nonbatch_runs_examples() {
        // 40 active steps, 20 arrivals
        let mut rows = vec![(1, 0, S)];
        rows.extend((1..40).map(|i| (if i % 2 == 0 { 1 } else { 0 }, 0, S)));
        assert_eq!(nonbatch_run_lengths(&trace(&rows), 0.25), [0]);
        let mut rows = vec![(1, 0, S)];
        rows.extend((1..40).map(|_| (0, 0, S)));
        assert_eq!(nonbatch_run_lengths(&trace(&rows), 0.25), [40]);

        let mut t = trace(&[(1, 0, S); 30]);
        t.episodes.push(BatchEpisode {
            start_step: 0,
            end_step: 29,
            ..episode(0, 0, 0)
        });
        // step 0 is the success that starts the batch, outside of it
        assert_eq!(nonbatch_run_lengths(&t, 0.25), [0]);
        t.rows[0].arrivals = 0;
        t.rows[0].population_before = 5;
        assert_eq!(nonbatch_run_lengths(&t, 2.0), [1]);
    }

    #[test]
    fn attempts() {
        let t = trace(&[(0, 0, S); 10]);
        let a = attempts_summary(&t, 9);
        assert_eq!(a.total_attempts, 0);
        assert!(a.attempts_per_arrival.is_infinite());
        let t = trace(&[(2, 3, S), (0, 1, S), (0, 2, S)]);
        assert_eq!(attempts_summary(&t, 1).total_attempts, 4);
        assert_eq!(attempts_summary(&t, 2).attempts_per_arrival, 3.0);
    }

    #[test]
    fn survival_examples() {
        assert_eq!(survival_tail(&[]), Err(EmptySample));
        let tail = survival_tail(&[0, 0, 0]).unwrap();
        assert!(tail.iter().all(|p| p.prob == 0.0));
        let tail = survival_tail(&[1, 2, 3, 4]).unwrap();
        let p3 = tail.iter().find(|p| p.t == 3).unwrap();
        assert_eq!(p3.prob, 0.5);
        assert!(p3.lo < 0.5 && p3.hi > 0.5);
        let grid = tail_grid(1024);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(*grid.last().unwrap() <= 1024 && *grid.last().unwrap() > 800);
    }

    #[test]
    fn wilson_known_values() {
        // 10 of 100: the textbook interval is about (0.0552, 0.1744)
        let (lo, hi) = wilson_interval(10, 100);
        assert!((lo - 0.0552).abs() < 5e-4 && (hi - 0.1744).abs() < 5e-4);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    /// `Pr[X >= t] = 2^-(t-1)` for geometric(1/2), so its log-log slope is
    /// `-(t-1) / log2 t`; and a Pareto tail `Pr[X >= t] = 1/t` fits slope -1.
    #[test]
    fn slope_against_known_tails() {
        let mut r = crate::rng::RngPlan::new(8).stream(crate::rng::StreamId::Aux(0));
        let pareto: Vec<u64> = (0..200_000)
            .map(|_| libm::floor(1.0 / crate::rng::unit_open0(&mut r)) as u64)
            .collect();
        let tail = survival_tail(&pareto).unwrap();
        let slope = tail_slope(&tail, 4, 256).unwrap();
        assert!((slope + 1.0).abs() < 0.05, "{slope}");

        let geo: Vec<u64> = (0..200_000)
            .map(|_| {
                let mut k = 1;
                while r.gen_bool(0.5) {
                    k += 1;
                }
                k
            })
            .collect();
        let tail = survival_tail(&geo).unwrap();
        let slope = tail_slope(&tail, 1, 2).unwrap();
        assert!((slope + 1.0).abs() < 0.05, "{slope}");
        assert!(tail_slope(&tail, 1000, 2000).is_none());
    }
}

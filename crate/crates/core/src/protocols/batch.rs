//! The synchronized batch protocol and the jamming protocol.
//!
//! A batch participant broadcasts with probability `1/i` in the `i`-th slot
//! of the batch channel. While doing so it jams the other channel,
//! broadcasting in the `i`-th slot there with probability
//! `min(1, c2 (1 + ln i) / i)`. The `1 + ln i` numerator keeps the first jam
//! slot certain (plain `ln 1 = 0` would leave it open) and is otherwise
//! `Theta(log i / i)`.

use rand::Rng;

use crate::channel::ChannelId;
use crate::rng::{coin, unit_open0};

#[inline]
pub fn batch_probability(i: u64) -> f64 {
    debug_assert!(i >= 1);
    1.0 / i.max(1) as f64
}

#[inline]
pub fn jam_probability(i: u64, c2: u64) -> f64 {
    let i = i.max(1) as f64;
    let p = c2 as f64 * (1.0 + libm::log(i)) / i;
    if p > 1.0 {
        1.0
    } else {
        p
    }
}

/// Position of a participant inside a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchState {
    pub channel: ChannelId,
    /// 1-based index of the current (or next) slot on `channel`.
    pub step: u64,
}

/// Position inside the jamming protocol that accompanies a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JamState {
    pub channel: ChannelId,
    pub step: u64,
    pub c2: u64,
}

impl BatchState {
    pub fn new(channel: ChannelId) -> Self {
        BatchState { channel, step: 1 }
    }

    pub fn probability(&self) -> f64 {
        batch_probability(self.step)
    }
}

impl JamState {
    pub fn new(channel: ChannelId, c2: u64) -> Self {
        JamState { channel, step: 1, c2 }
    }

    pub fn probability(&self) -> f64 {
        jam_probability(self.step, self.c2)
    }
}

/// Batch decision for the current step; the caller advances `step`.
pub fn batch_decide<R: Rng + ?Sized>(state: &BatchState, rng: &mut R) -> bool {
    coin(state.probability(), rng)
}

/// Jamming decision for the current step; the caller advances `step`.
pub fn jam_decide<R: Rng + ?Sized>(state: &JamState, rng: &mut R) -> bool {
    coin(state.probability(), rng)
}

/// Next batch step `>= from` at which a `1/i` broadcaster transmits, or
/// `None` beyond `limit`.
///
/// No broadcast in `from..=b` has probability `(from - 1) / b`, which
/// inverts in closed form.
pub fn next_batch_broadcast<R: Rng + ?Sized>(from: u64, limit: u64, rng: &mut R) -> Option<u64> {
    let from = from.max(1);
    if from > limit {
        return None;
    }
    if from == 1 {
        return Some(1);
    }
    let u = unit_open0(rng);
    let b = libm::floor((from - 1) as f64 / u);
    if b >= limit as f64 {
        None
    } else {
        Some((b as u64 + 1).max(from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngPlan, StreamId};

    fn rng(i: u64) -> crate::rng::StreamRng {
        RngPlan::new(5).stream(StreamId::Aux(i))
    }

    #[test]
    fn batch_probabilities() {
        let mut r = rng(0);
        let s = BatchState::new(ChannelId::A);
        assert!((0..1000).all(|_| batch_decide(&s, &mut r)));
        let mut prev = 1.0;
        for i in 1..10_000 {
            let p = batch_probability(i);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn batch_i10_monte_carlo() {
        let mut r = rng(1);
        let s = BatchState {
            channel: ChannelId::B,
            step: 10,
        };
        let n = 1_000_000;
        let hits = (0..n).filter(|_| batch_decide(&s, &mut r)).count();
        assert!((hits as f64 / n as f64 - 0.1).abs() <= 0.001);
    }

    #[test]
    fn jam_probabilities() {
        assert_eq!(jam_probability(1, 2), 1.0);
        let p20 = jam_probability(20, 2);
        assert!((p20 - 2.0 * (1.0 + libm::log(20.0)) / 20.0).abs() < 1e-15);
        assert!((p20 - 0.4).abs() < 0.001);
        // eventually nonincreasing, and (1 + ln i)/i itself never increases
        for c2 in [1u64, 2, 4, 16] {
            for i in 1..20_000 {
                assert!(jam_probability(i + 1, c2) <= jam_probability(i, c2));
            }
        }
        let mut r = rng(2);
        let s = JamState {
            channel: ChannelId::A,
            step: 20,
            c2: 2,
        };
        let n = 1_000_000;
        let hits = (0..n).filter(|_| jam_decide(&s, &mut r)).count();
        assert!((hits as f64 / n as f64 - p20).abs() <= 0.002);
    }

    #[test]
    fn batch_skip_sampling_marginals() {
        let mut r = rng(3);
        let runs = 100_000;
        let horizon = 40usize;
        let mut hits = [0u32; 41];
        for _ in 0..runs {
            let mut at = 1;
            while let Some(b) = next_batch_broadcast(at, 1 << 30, &mut r) {
                if b as usize > horizon {
                    break;
                }
                hits[b as usize] += 1;
                at = b + 1;
            }
        }
        for (i, &h) in hits.iter().enumerate().skip(1) {
            let p = 1.0 / i as f64;
            let f = h as f64 / runs as f64;
            let sd = libm::sqrt(p * (1.0 - p) / runs as f64).max(1e-9);
            assert!((f - p).abs() < 5.0 * sd, "i={i} f={f}");
        }
        assert_eq!(next_batch_broadcast(11, 10, &mut r), None);
    }
}

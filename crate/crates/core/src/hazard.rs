//! Skip sampling for per-step broadcast probabilities.
//!
//! A player that broadcasts at step `i` independently with probability
//! `p(i)` can equivalently draw the index of its next broadcast directly:
//! with cumulative hazard `H(i) = sum_{j <= i} -ln(1 - p(j))`, the next
//! broadcast at or after `from` is the smallest `b` with
//! `H(b) - H(from - 1) >= E` for `E ~ Exp(1)`. The engine relies on this to
//! touch a player only on the steps where it actually transmits.

use alloc::vec::Vec;
use rand::Rng;

use crate::protocols::{baseline, batch};
use crate::rng::unit_open0;

/// A per-step broadcast probability sequence indexed from 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HazardFn {
    /// `1 / i`.
    Harmonic,
    /// `min(1, c2 (1 + ln i) / i)`.
    Jam { c2: u64 },
    /// `min(1, 2 / t)`.
    Exponential,
    /// `min(1, t^-gamma)`.
    Polynomial { gamma: f64 },
}

impl HazardFn {
    pub fn probability(&self, i: u64) -> f64 {
        match *self {
            HazardFn::Harmonic => batch::batch_probability(i),
            HazardFn::Jam { c2 } => batch::jam_probability(i, c2),
            HazardFn::Exponential => baseline::exp_backoff_probability(i),
            HazardFn::Polynomial { gamma } => baseline::poly_backoff_probability(i, gamma),
        }
    }

    /// Largest `i` with `p(i) >= 1`; every supported sequence is certain on a
    /// prefix and strictly below one afterwards.
    fn certain_prefix(&self) -> u64 {
        let mut i = 0;
        while self.probability(i + 1) >= 1.0 {
            i += 1;
        }
        i
    }
}

/// Lazily extended cumulative-hazard table for one [`HazardFn`].
#[derive(Clone, Debug)]
pub struct HazardTable {
    hazard: HazardFn,
    certain_until: u64,
    /// `cum[k]` is the hazard accumulated over `(certain_until, certain_until + k]`.
    cum: Vec<f64>,
    limit: u64,
}

impl HazardTable {
    /// Events beyond index `limit` are reported as never happening.
    pub fn new(hazard: HazardFn, limit: u64) -> Self {
        let certain_until = hazard.certain_prefix();
        let cum = alloc::vec![0.0];
        HazardTable {
            hazard,
            certain_until,
            cum,
            limit,
        }
    }

    pub fn hazard(&self) -> HazardFn {
        self.hazard
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    fn last_index(&self) -> u64 {
        self.certain_until + (self.cum.len() as u64 - 1)
    }

    fn push_until(&mut self, mut done: impl FnMut(&Self) -> bool) {
        while !done(self) && self.last_index() < self.limit {
            let grow = (self.cum.len() as u64).clamp(1024, 1 << 20);
            let stop = (self.last_index() + grow).min(self.limit);
            let mut acc = *self.cum.last().unwrap();
            for i in self.last_index() + 1..=stop {
                acc += -libm::log1p(-self.hazard.probability(i));
                self.cum.push(acc);
            }
        }
    }

    /// Index of the next event at or after `from` (`from >= 1`), or `None` if
    /// it falls beyond the table limit.
    pub fn next_event<R: Rng + ?Sized>(&mut self, from: u64, rng: &mut R) -> Option<u64> {
        let from = from.max(1);
        if from > self.limit {
            return None;
        }
        if from <= self.certain_until {
            return Some(from);
        }
        let e = -libm::log(unit_open0(rng));
        let base_idx = (from - 1 - self.certain_until) as usize;
        self.push_until(|t| t.cum.len() > base_idx);
        let target = self.cum[base_idx] + e;
        self.push_until(|t| *t.cum.last().unwrap() >= target);
        let tail = &self.cum[base_idx + 1..];
        let pos = tail.partition_point(|&h| h < target);
        if pos == tail.len() {
            None
        } else {
            Some(from + pos as u64)
        }
    }
}

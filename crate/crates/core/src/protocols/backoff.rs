//! c-backoff.
//!
//! Started at local slot `s`, a c-backoff picks, for every epoch `l >= 1`, a
//! multiset `B_l` of `c` uniform slots from `(s + c^l, s + c^(l+1)]` and
//! broadcasts in each of them. It never stops on its own; the owner stops
//! consulting it when the player changes phase.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{ConfigError, ProtocolError};

/// `c^exp`, or `None` on overflow.
pub(crate) fn checked_pow(c: u64, exp: u32) -> Option<u64> {
    c.checked_pow(exp)
}

/// Smallest `k` with `c^k >= x` (`x >= 1`).
pub fn ceil_log(c: u64, x: u64) -> u32 {
    let mut k = 0;
    let mut p: u128 = 1;
    while p < x as u128 {
        p *= c as u128;
        k += 1;
    }
    k
}

/// Epoch containing offset `tau`, i.e. the `l >= 1` with `c^l < tau <= c^(l+1)`.
pub fn epoch_of_offset(c: u64, tau: u64) -> Option<u32> {
    if tau <= c {
        None
    } else {
        Some(ceil_log(c, tau) - 1)
    }
}

/// Offsets `(lo, hi]` covered by epoch `l`.
pub fn epoch_bounds(c: u64, epoch: u32) -> Option<(u64, u64)> {
    Some((checked_pow(c, epoch)?, checked_pow(c, epoch + 1)?))
}

/// Expected number of schedule entries at offset `tau` of a fresh c-backoff:
/// `c / |R_l| = 1 / (c^(k-1) - c^(k-2))` with `k = ceil(log_c tau)`.
///
/// Repeated draws of the same slot count with multiplicity here. Zero for
/// `tau <= c`.
pub fn backoff_probability(c: u64, tau: u64) -> f64 {
    if c < 2 || tau <= c {
        return 0.0;
    }
    let k = ceil_log(c, tau);
    let hi = (c as u128).pow(k - 1);
    let lo = (c as u128).pow(k - 2);
    1.0 / (hi - lo) as f64
}

/// Probability that a fresh c-backoff actually transmits at offset `tau`
/// (duplicate picks collapse): `1 - (1 - 1/|R_l|)^c`.
pub fn backoff_transmit_probability(c: u64, tau: u64) -> f64 {
    if c < 2 || tau <= c {
        return 0.0;
    }
    let k = ceil_log(c, tau);
    let width = ((c as u128).pow(k) - (c as u128).pow(k - 1)) as f64;
    1.0 - libm::pow(1.0 - 1.0 / width, c as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackoffState {
    c: u64,
    local_start: u64,
    /// Highest materialized epoch; 0 before the first one is drawn.
    epoch: u32,
    /// Sorted broadcast multiset of `epoch`, as absolute local slots.
    schedule: Vec<u64>,
    last_query: Option<u64>,
}

impl BackoffState {
    pub fn new(c: u64, local_start: u64) -> Result<Self, ConfigError> {
        if c < 2 {
            return Err(ConfigError::BackoffBase(c));
        }
        Ok(BackoffState {
            c,
            local_start,
            epoch: 0,
            schedule: Vec::with_capacity(c as usize),
            last_query: None,
        })
    }

    pub fn c(&self) -> u64 {
        self.c
    }

    pub fn local_start(&self) -> u64 {
        self.local_start
    }

    pub fn current_epoch(&self) -> u32 {
        self.epoch
    }

    /// Broadcast multiset of the current epoch (absolute local slots, sorted).
    pub fn epoch_schedule(&self) -> &[u64] {
        &self.schedule
    }

    fn materialize_next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let next = self.epoch + 1;
        let Some((lo, hi)) = epoch_bounds(self.c, next) else {
            return false;
        };
        let (Some(lo), Some(hi)) = (self.local_start.checked_add(lo), self.local_start.checked_add(hi)) else {
            return false;
        };
        self.schedule.clear();
        for _ in 0..self.c {
            self.schedule.push(rng.gen_range(lo + 1..=hi));
        }
        self.schedule.sort_unstable();
        self.epoch = next;
        true
    }

    fn materialize_through<R: Rng + ?Sized>(&mut self, epoch: u32, rng: &mut R) {
        while self.epoch < epoch {
            if !self.materialize_next(rng) {
                break;
            }
        }
    }

    fn check_order(&mut self, local_slot: u64) -> Result<(), ProtocolError> {
        if local_slot < self.local_start {
            return Err(ProtocolError::BeforeStart {
                start: self.local_start,
                requested: local_slot,
            });
        }
        if let Some(prev) = self.last_query {
            if local_slot < prev {
                return Err(ProtocolError::SlotWentBackwards {
                    previous: prev,
                    requested: local_slot,
                });
            }
        }
        self.last_query = Some(local_slot);
        Ok(())
    }

    /// Whether the schedule includes `local_slot`. Queries must not move
    /// backwards; epochs are drawn in order when first reached.
    pub fn decide<R: Rng + ?Sized>(&mut self, local_slot: u64, rng: &mut R) -> Result<bool, ProtocolError> {
        self.check_order(local_slot)?;
        let Some(epoch) = epoch_of_offset(self.c, local_slot - self.local_start) else {
            return Ok(false);
        };
        self.materialize_through(epoch, rng);
        Ok(self.epoch == epoch && self.schedule.binary_search(&local_slot).is_ok())
    }

    /// Smallest scheduled local slot strictly after `after`.
    ///
    /// Consumes randomness exactly as a slot-by-slot sequence of
    /// [`decide`](Self::decide) calls would, so both views of one state agree.
    pub fn next_broadcast<R: Rng + ?Sized>(&mut self, after: u64, rng: &mut R) -> Result<u64, ProtocolError> {
        self.check_order(after)?;
        if self.epoch == 0 && !self.materialize_next(rng) {
            return Ok(u64::MAX);
        }
        loop {
            if let Some(&slot) = self.schedule.iter().find(|&&s| s > after) {
                return Ok(slot);
            }
            if !self.materialize_next(rng) {
                return Ok(u64::MAX);
            }
        }
    }
}

/// Per-slot c-backoff decision; see [`BackoffState::decide`].
pub fn backoff_decide<R: Rng + ?Sized>(
    state: &mut BackoffState,
    local_slot: u64,
    rng: &mut R,
) -> Result<bool, ProtocolError> {
    state.decide(local_slot, rng)
}

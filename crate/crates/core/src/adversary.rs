//! Arrival and jamming adversaries.
//!
//! An adversary decides, before each slot, how many new players enter. It
//! may look at which earlier slots held a success and who won them, and at
//! its own randomness for the slot. It never sees collisions versus silence,
//! player phases, or player randomness.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use rand::Rng;

use crate::channel::{ChannelId, PlayerId};
use crate::error::{ConfigError, ProtocolError};
use crate::rng::{unit_open0, RngPlan, StreamId};

/// Successes the adversary has seen, strictly before `current_step`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisibleHistory {
    successes: Vec<(u64, PlayerId)>,
    current_step: u64,
}

impl VisibleHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    /// Successes so far as `(step, winner)`, in step order.
    pub fn successes(&self) -> &[(u64, PlayerId)] {
        &self.successes
    }

    pub fn success_count(&self) -> usize {
        self.successes.len()
    }

    pub fn success_at(&self, step: u64) -> Option<(ChannelId, PlayerId)> {
        self.successes
            .binary_search_by_key(&step, |&(s, _)| s)
            .ok()
            .map(|i| (ChannelId::of_step(step), self.successes[i].1))
    }

    /// Closes the current slot, recording its winner if there was one.
    pub fn push_slot(&mut self, winner: Option<PlayerId>) {
        if let Some(w) = winner {
            self.successes.push((self.current_step, w));
        }
        self.current_step += 1;
    }
}

/// Which adversary to run and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum AdversaryPolicy {
    /// `n` players at `at_step`.
    Burst { n: u64, at_step: u64 },
    /// `n` players as evenly as possible over steps `0..over_steps`.
    Spread { n: u64, over_steps: u64 },
    /// `initial_fraction * n` players at step 0; afterwards `clump` more
    /// players right after every observed success until `n` have arrived.
    AdaptiveReactive { n: u64, initial_fraction: f64, clump: u64 },
    /// Poisson(`rate`) arrivals per step for steps `< until`.
    PoissonLike { rate: f64, until: u64 },
    /// The two-stage jamming construction: steps from [`jam_schedule`] are
    /// jammed and arrivals follow [`second_stage_arrivals`].
    JammingLowerBound { n: u64, c: u64 },
    /// `n` players start in batch execution at step 0 (as if a success had
    /// just happened on channel B); `injected` more players arrive spread
    /// over steps `1..=over_steps` and run phase 1 normally.
    BatchStart { n: u64, injected: u64, over_steps: u64 },
}

impl AdversaryPolicy {
    pub fn burst(n: u64, at_step: u64) -> Self {
        AdversaryPolicy::Burst { n, at_step }
    }

    pub fn spread(n: u64, over_steps: u64) -> Self {
        AdversaryPolicy::Spread { n, over_steps }
    }

    /// Burst of `n/2` at step 0, then two players per observed success.
    pub fn adaptive(n: u64) -> Self {
        AdversaryPolicy::AdaptiveReactive {
            n,
            initial_fraction: 0.5,
            clump: 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AdversaryPolicy::Burst { .. } => "burst",
            AdversaryPolicy::Spread { .. } => "spread",
            AdversaryPolicy::AdaptiveReactive { .. } => "adaptive",
            AdversaryPolicy::PoissonLike { .. } => "poisson",
            AdversaryPolicy::JammingLowerBound { .. } => "jamming",
            AdversaryPolicy::BatchStart { .. } => "batch_start",
        }
    }

    /// Total arrivals the policy can emit, if finite.
    pub fn planned_arrivals(&self) -> Option<u64> {
        match *self {
            AdversaryPolicy::Burst { n, .. } | AdversaryPolicy::Spread { n, .. } => Some(n),
            AdversaryPolicy::AdaptiveReactive { n, .. } => Some(n),
            AdversaryPolicy::PoissonLike { .. } => None,
            AdversaryPolicy::JammingLowerBound { n, c } => Some(second_stage_count(n, c)),
            AdversaryPolicy::BatchStart { n, injected, .. } => Some(n + injected),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            AdversaryPolicy::Spread { n, over_steps } if n > 0 && over_steps == 0 => {
                Err(ConfigError::Adversary("spread needs over_steps >= 1"))
            }
            AdversaryPolicy::AdaptiveReactive { initial_fraction, .. } if !(0.0..=1.0).contains(&initial_fraction) => {
                Err(ConfigError::Adversary("initial_fraction must lie in [0, 1]"))
            }
            AdversaryPolicy::PoissonLike { rate, .. } if !(rate.is_finite() && rate >= 0.0) => {
                Err(ConfigError::Adversary("poisson rate must be finite and nonnegative"))
            }
            AdversaryPolicy::JammingLowerBound { n, c } if c == 0 || n < 2 * c => {
                Err(ConfigError::DegenerateJamming { n, c })
            }
            AdversaryPolicy::BatchStart {
                injected, over_steps, ..
            } if injected > 0 && over_steps == 0 => Err(ConfigError::Adversary("batch_start needs over_steps >= 1")),
            _ => Ok(()),
        }
    }
}

/// Arrivals at step `s` of an even spread of `n` over `over` steps.
pub fn spread_count(n: u64, over: u64, s: u64) -> u64 {
    if s >= over {
        return 0;
    }
    let (n, over, s) = (n as u128, over as u128, s as u128);
    let upto = |k: u128| (k * n).div_ceil(over);
    (upto(s + 1) - upto(s)) as u64
}

fn second_stage_count(n: u64, c: u64) -> u64 {
    (n / c.max(1)).max(1)
}

/// Steps jammed by the lower-bound construction: the prefix
/// `1..=ceil(n/2c)` plus `ceil(n/2c)` uniform draws from `1..=n` (with
/// replacement, so duplicates collapse). At most `n/c` steps in total.
pub fn jam_schedule<R: Rng + ?Sized>(n: u64, c: u64, rng: &mut R) -> Result<BTreeSet<u64>, ConfigError> {
    if c == 0 || n < 2 * c {
        return Err(ConfigError::DegenerateJamming { n, c });
    }
    let stage = n.div_ceil(2 * c);
    let mut jammed: BTreeSet<u64> = (1..=stage).collect();
    for _ in 0..stage {
        jammed.insert(rng.gen_range(1..=n));
    }
    Ok(jammed)
}

/// Arrival steps of the second stage: one player at step 1 and `n/c - 1`
/// more at independent uniform steps in `1..=n`. Sorted.
pub fn second_stage_arrivals<R: Rng + ?Sized>(n: u64, c: u64, rng: &mut R) -> Result<Vec<u64>, ConfigError> {
    if c == 0 || n < c {
        return Err(ConfigError::DegenerateJamming { n, c });
    }
    let count = second_stage_count(n, c);
    let mut steps = Vec::with_capacity(count as usize);
    steps.push(1);
    for _ in 1..count {
        steps.push(rng.gen_range(1..=n));
    }
    steps.sort_unstable();
    Ok(steps)
}

/// Knuth's method, in chunks so `exp(-rate)` never underflows.
fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    let mut left = rate;
    let mut total = 0;
    while left > 0.0 {
        let chunk = left.min(16.0);
        left -= chunk;
        let floor = libm::exp(-chunk);
        let mut prod = unit_open0(rng);
        while prod > floor {
            total += 1;
            prod *= unit_open0(rng);
        }
    }
    total
}

/// A running adversary.
#[derive(Clone, Debug)]
pub struct Adversary {
    policy: AdversaryPolicy,
    next_step: u64,
    emitted: u64,
    seen_successes: usize,
    scheduled: BTreeMap<u64, u64>,
    jammed: BTreeSet<u64>,
}

impl Adversary {
    pub fn new(policy: AdversaryPolicy, plan: &RngPlan) -> Result<Self, ConfigError> {
        policy.validate()?;
        let mut scheduled = BTreeMap::new();
        let mut jammed = BTreeSet::new();
        if let AdversaryPolicy::JammingLowerBound { n, c } = policy {
            jammed = jam_schedule(n, c, &mut plan.stream(StreamId::Jamming))?;
            for s in second_stage_arrivals(n, c, &mut plan.stream(StreamId::AdversarySetup))? {
                *scheduled.entry(s).or_insert(0) += 1;
            }
        }
        Ok(Adversary {
            policy,
            next_step: 0,
            emitted: 0,
            seen_successes: 0,
            scheduled,
            jammed,
        })
    }

    pub fn policy(&self) -> &AdversaryPolicy {
        &self.policy
    }

    /// Players that start the run already in batch execution.
    pub fn initial_batch(&self) -> u64 {
        match self.policy {
            AdversaryPolicy::BatchStart { n, .. } => n,
            _ => 0,
        }
    }

    pub fn jammed_steps(&self) -> &BTreeSet<u64> {
        &self.jammed
    }

    pub fn is_jammed(&self, step: u64) -> bool {
        self.jammed.contains(&step)
    }

    /// Whether [`next_arrivals`](Self::next_arrivals) ever draws from its
    /// random stream.
    pub fn uses_slot_randomness(&self) -> bool {
        matches!(self.policy, AdversaryPolicy::PoissonLike { .. })
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Arrivals entering before slot `history.current_step()`. Must be called
    /// once per slot, in order.
    pub fn next_arrivals<R: Rng + ?Sized>(
        &mut self,
        history: &VisibleHistory,
        rng: &mut R,
    ) -> Result<u64, ProtocolError> {
        let t = history.current_step();
        if t != self.next_step {
            return Err(ProtocolError::SlotWentBackwards {
                previous: self.next_step,
                requested: t,
            });
        }
        self.next_step += 1;
        let k = match self.policy {
            AdversaryPolicy::Burst { n, at_step } => {
                if t == at_step {
                    n
                } else {
                    0
                }
            }
            AdversaryPolicy::Spread { n, over_steps } => spread_count(n, over_steps, t),
            AdversaryPolicy::AdaptiveReactive {
                n,
                initial_fraction,
                clump,
            } => {
                if t == 0 {
                    self.seen_successes = history.success_count();
                    libm::floor(n as f64 * initial_fraction) as u64
                } else {
                    let fresh = history.success_count() - self.seen_successes;
                    self.seen_successes = history.success_count();
                    (fresh as u64 * clump).min(n - self.emitted)
                }
            }
            AdversaryPolicy::PoissonLike { rate, until } => {
                if t < until {
                    poisson(rate, rng)
                } else {
                    0
                }
            }
            AdversaryPolicy::JammingLowerBound { .. } => self.scheduled.get(&t).copied().unwrap_or(0),
            AdversaryPolicy::BatchStart {
                injected, over_steps, ..
            } => {
                if t == 0 {
                    0
                } else {
                    spread_count(injected, over_steps, t - 1)
                }
            }
        };
        self.emitted += k;
        Ok(k)
    }
}

//! Recorded runs.

use alloc::vec::Vec;

use crate::channel::{ChannelId, OutcomeKind, SlotOutcome};
use crate::protocols::PhaseKind;

/// One global step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub kind: OutcomeKind,
    /// Players that entered before this slot.
    pub arrivals: u64,
    /// Players in the system before this slot's arrivals.
    pub population_before: u64,
    /// Players that transmitted in this slot.
    pub broadcasters: u64,
}

impl StepRecord {
    /// Whether at least one player is in the system during the slot.
    pub fn is_active(&self) -> bool {
        self.population_before + self.arrivals > 0
    }
}

/// Lifetime summary of one player.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlayerRecord {
    pub arrival: u64,
    /// Step of the player's own success.
    pub departure: Option<u64>,
    pub attempts: u64,
    /// Step at which the player first entered batch synchronization.
    pub synced_at: Option<u64>,
    /// Step at which the player first entered batch execution.
    pub batched_at: Option<u64>,
    pub final_phase: PhaseKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeEnd {
    /// A success on the jammed channel.
    JamChannelSuccess,
    /// A new batch started on the same channel.
    Superseded,
    /// The system emptied.
    Emptied,
    /// Still running at the horizon.
    Horizon,
}

/// A batch operation. The success at `start_step` starts it and is not
/// part of it; the step that ends it is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchEpisode {
    pub start_step: u64,
    pub end_step: u64,
    pub channel: ChannelId,
    /// Players that entered batch execution at `start_step`.
    pub participants: u64,
    /// Successes (on either channel) in `(start_step, end_step]`.
    pub successes: u64,
    /// Arrivals in `(start_step, end_step]`.
    pub arrivals: u64,
    pub end: EpisodeEnd,
}

impl BatchEpisode {
    /// Length in batch-channel steps.
    pub fn length(&self) -> u64 {
        (self.end_step - self.start_step) / 2
    }
}

/// Counts of slots or events where a structural property of the main
/// protocol failed. All zero in a correct run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PropertyViolations {
    /// Two batch operations at once.
    pub concurrent_batches: u64,
    /// A broadcaster on the batch channel that is neither a participant nor
    /// a phase-1 player who arrived during the batch.
    pub foreign_batch_broadcasters: u64,
    /// A non-participant at batch start that neither arrived later nor began
    /// synchronizing on the other channel right then.
    pub stale_non_participants: u64,
}

impl PropertyViolations {
    pub fn total(&self) -> u64 {
        self.concurrent_batches + self.foreign_batch_broadcasters + self.stale_non_participants
    }
}

/// Everything a run produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub seed: u64,
    pub horizon: u64,
    pub rows: Vec<StepRecord>,
    pub players: Vec<PlayerRecord>,
    pub episodes: Vec<BatchEpisode>,
    pub violations: PropertyViolations,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn outcome(&self, step: u64) -> Option<SlotOutcome> {
        self.rows.get(step as usize).map(|r| SlotOutcome {
            kind: r.kind,
            global_step: step,
            channel: ChannelId::of_step(step),
        })
    }

    pub fn total_arrivals(&self) -> u64 {
        self.players.len() as u64
    }

    pub fn total_successes(&self) -> u64 {
        self.players.iter().filter(|p| p.departure.is_some()).count() as u64
    }

    pub fn total_attempts(&self) -> u64 {
        self.rows.iter().map(|r| r.broadcasters).sum()
    }

    /// Population after the last step.
    pub fn final_population(&self) -> u64 {
        self.total_arrivals() - self.total_successes()
    }

    /// Steps of successes, in order.
    pub fn success_steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind.is_success())
            .map(|(s, _)| s as u64)
    }

    /// First success, if any.
    pub fn first_success(&self) -> Option<u64> {
        self.success_steps().next()
    }
}

//! The per-player state machine.
//!
//! Under the main protocol a player moves through three phases:
//!
//! 1. *Channel choosing*: c-backoff on a channel of its own choice until it
//!    sees a success anywhere. It then moves to the channel where that
//!    success did not happen.
//! 2. *Batch synchronization*: a fresh c-backoff on that channel until a
//!    success is seen there.
//! 3. *Batch execution*: the batch protocol on that channel and the jamming
//!    protocol on the other one. A success on the jammed channel restarts
//!    phase 3 with the roles of the channels swapped.
//!
//! A player's own success ends everything. Transitions look only at
//! [`PlayerObservation`]s; silence, collisions and jamming are the same to
//! a player.
//!
//! Broadcast decisions come in two interchangeable flavors (see
//! [`Sampling`]): slot-by-slot coin flips, or skip sampling where the next
//! broadcast step of every role is drawn in advance. The skip form lets the
//! engine visit a player only when it transmits.

use rand::Rng;

use crate::channel::{ChannelId, ObservationKind, PlayerId, PlayerObservation};
use crate::error::{ConfigError, ProtocolError};
use crate::hazard::{HazardFn, HazardTable};
use crate::rng::StreamRng;

use super::backoff::BackoffState;
use super::baseline::{exp_backoff_decide, poly_backoff_decide};
use super::batch::{batch_decide, jam_decide, next_batch_broadcast, BatchState, JamState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Protocol {
    /// Three-phase protocol over two virtual channels.
    Main,
    /// c-backoff on every slot until success (no channel split).
    PureBackoff,
    /// `min(1, 2/t)` per slot.
    ExpBackoff,
    /// `min(1, t^-gamma)` per slot.
    PolyBackoff { gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Draw the next broadcast step of each role ahead of time.
    Skip,
    /// Flip a coin (or consult the backoff schedule) on every slot.
    PerSlot,
}

/// How a newly arrived player picks its phase-1 channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelChoice {
    Coin,
    AlwaysA,
}

/// Shared, per-run protocol parameters and sampling tables.
#[derive(Clone, Debug)]
pub struct ProtocolCtx {
    pub protocol: Protocol,
    pub c: u64,
    pub c2: u64,
    pub sampling: Sampling,
    pub choice: ChannelChoice,
    limit: u64,
    jam: HazardTable,
    baseline: Option<HazardTable>,
}

impl ProtocolCtx {
    /// `limit` bounds the protocol-step indices that need to be sampled
    /// (the run horizon is always enough).
    pub fn new(
        protocol: Protocol,
        c: u64,
        c2: u64,
        sampling: Sampling,
        choice: ChannelChoice,
        limit: u64,
    ) -> Result<Self, ConfigError> {
        if c < 2 {
            return Err(ConfigError::BackoffBase(c));
        }
        if c2 < 1 {
            return Err(ConfigError::JamConstant(c2));
        }
        let baseline = match protocol {
            Protocol::ExpBackoff => Some(HazardTable::new(HazardFn::Exponential, limit)),
            Protocol::PolyBackoff { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(ConfigError::Exponent(gamma));
                }
                Some(HazardTable::new(HazardFn::Polynomial { gamma }, limit))
            }
            Protocol::Main | Protocol::PureBackoff => None,
        };
        Ok(ProtocolCtx {
            protocol,
            c,
            c2,
            sampling,
            choice,
            limit,
            jam: HazardTable::new(HazardFn::Jam { c2 }, limit),
            baseline,
        })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phase {
    ChannelChoosing {
        channel: ChannelId,
        backoff: BackoffState,
    },
    BatchSync {
        channel: ChannelId,
        backoff: BackoffState,
    },
    /// `origin` is the global step of the success that started this batch;
    /// batch step `i` is global step `origin + 2i`, jam step `i` is
    /// `origin + 2i - 1`.
    BatchExec {
        batch: BatchState,
        jam: JamState,
        origin: u64,
    },
    /// [`Protocol::PureBackoff`], counting global steps.
    SingleBackoff {
        backoff: BackoffState,
    },
    /// [`Protocol::ExpBackoff`] and [`Protocol::PolyBackoff`].
    Aging,
    Done,
}

/// Coarse phase label, used for bookkeeping and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhaseKind {
    ChannelChoosing,
    BatchSync,
    BatchExec,
    SingleBackoff,
    Aging,
    Done,
}

/// Roles: index 0 is the phase's main activity, index 1 the jamming role.
const MAIN: usize = 0;
const JAM: usize = 1;

#[derive(Clone, Debug)]
pub struct PlayerState {
    id: PlayerId,
    arrival: u64,
    phase: Phase,
    attempts: u64,
    rng: StreamRng,
    /// Next broadcast global step per role (skip sampling only).
    next: [Option<u64>; 2],
    phase_entered: u64,
}

impl PlayerState {
    /// A player present from global step `arrival` onwards.
    pub fn arrive(
        id: PlayerId,
        arrival: u64,
        mut rng: StreamRng,
        ctx: &mut ProtocolCtx,
    ) -> Result<Self, ProtocolError> {
        let phase = match ctx.protocol {
            Protocol::Main => {
                let channel = match ctx.choice {
                    ChannelChoice::Coin => {
                        if rng.gen_bool(0.5) {
                            ChannelId::A
                        } else {
                            ChannelId::B
                        }
                    }
                    ChannelChoice::AlwaysA => ChannelId::A,
                };
                let start = channel.first_local_at_or_after(arrival);
                Phase::ChannelChoosing {
                    channel,
                    backoff: fresh_backoff(ctx.c, start),
                }
            }
            Protocol::PureBackoff => Phase::SingleBackoff {
                backoff: fresh_backoff(ctx.c, arrival),
            },
            Protocol::ExpBackoff | Protocol::PolyBackoff { .. } => Phase::Aging,
        };
        let mut p = PlayerState {
            id,
            arrival,
            phase,
            attempts: 0,
            rng,
            next: [None, None],
            phase_entered: arrival,
        };
        p.schedule_all(ctx, arrival)?;
        Ok(p)
    }

    /// A main-protocol player that starts directly in batch execution, as if
    /// a success on `batch_channel` had happened at step `origin`.
    pub fn in_batch(
        id: PlayerId,
        origin: u64,
        batch_channel: ChannelId,
        rng: StreamRng,
        ctx: &mut ProtocolCtx,
    ) -> Result<Self, ProtocolError> {
        debug_assert_eq!(ChannelId::of_step(origin), batch_channel);
        let mut p = PlayerState {
            id,
            arrival: origin,
            phase: Phase::BatchExec {
                batch: BatchState::new(batch_channel),
                jam: JamState::new(batch_channel.other(), ctx.c2),
                origin,
            },
            attempts: 0,
            rng,
            next: [None, None],
            phase_entered: origin,
        };
        p.schedule_all(ctx, origin + 1)?;
        Ok(p)
    }

    pub fn id(&self) -> PlayerId {
        self.id
    }

    pub fn arrival(&self) -> u64 {
        self.arrival
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn phase_kind(&self) -> PhaseKind {
        match self.phase {
            Phase::ChannelChoosing { .. } => PhaseKind::ChannelChoosing,
            Phase::BatchSync { .. } => PhaseKind::BatchSync,
            Phase::BatchExec { .. } => PhaseKind::BatchExec,
            Phase::SingleBackoff { .. } => PhaseKind::SingleBackoff,
            Phase::Aging => PhaseKind::Aging,
            Phase::Done => PhaseKind::Done,
        }
    }

    /// Global step at which the current phase began.
    pub fn phase_entered(&self) -> u64 {
        self.phase_entered
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    /// Batch channel while in batch execution.
    pub fn batch_channel(&self) -> Option<ChannelId> {
        match &self.phase {
            Phase::BatchExec { batch, .. } => Some(batch.channel),
            _ => None,
        }
    }

    /// Step of the success that started the current batch.
    pub fn batch_origin(&self) -> Option<u64> {
        match &self.phase {
            Phase::BatchExec { origin, .. } => Some(*origin),
            _ => None,
        }
    }

    /// Channel of a backoff phase (1 or 2).
    pub fn backoff_channel(&self) -> Option<ChannelId> {
        match &self.phase {
            Phase::ChannelChoosing { channel, .. } | Phase::BatchSync { channel, .. } => Some(*channel),
            _ => None,
        }
    }

    /// Pending broadcast steps (skip sampling), per role.
    pub fn scheduled(&self) -> [Option<u64>; 2] {
        self.next
    }

    /// Earliest pending broadcast step (skip sampling).
    pub fn next_broadcast(&self) -> Option<u64> {
        match self.next {
            [Some(a), Some(b)] => Some(a.min(b)),
            [a, b] => a.or(b),
        }
    }

    fn schedule_all(&mut self, ctx: &mut ProtocolCtx, from: u64) -> Result<(), ProtocolError> {
        self.next = [None, None];
        if ctx.sampling == Sampling::Skip {
            self.next[MAIN] = self.draw_next(MAIN, from, ctx)?;
            self.next[JAM] = self.draw_next(JAM, from, ctx)?;
        }
        Ok(())
    }

    /// Next broadcast of `role` at a global step `>= from`.
    fn draw_next(&mut self, role: usize, from: u64, ctx: &mut ProtocolCtx) -> Result<Option<u64>, ProtocolError> {
        let limit = ctx.limit;
        let rng = &mut self.rng;
        let step = match (&mut self.phase, role) {
            (Phase::ChannelChoosing { channel, backoff }, MAIN) | (Phase::BatchSync { channel, backoff }, MAIN) => {
                let after = channel.first_local_at_or_after(from).saturating_sub(1);
                let after = after.max(backoff.local_start());
                let local = backoff.next_broadcast(after, rng)?;
                (local != u64::MAX).then(|| channel.global_step(local))
            }
            (Phase::SingleBackoff { backoff }, MAIN) => {
                let after = from.saturating_sub(1).max(backoff.local_start());
                let local = backoff.next_broadcast(after, rng)?;
                (local != u64::MAX).then_some(local)
            }
            (Phase::BatchExec { origin, .. }, MAIN) => {
                let i_from = from.saturating_sub(*origin).div_ceil(2);
                next_batch_broadcast(i_from.max(1), limit, rng).map(|i| *origin + 2 * i)
            }
            (Phase::BatchExec { origin, .. }, JAM) => {
                let i_from = (from.saturating_sub(*origin) + 2) / 2;
                ctx.jam.next_event(i_from.max(1), rng).map(|i| *origin + 2 * i - 1)
            }
            (Phase::Aging, MAIN) => {
                let t_from = from - self.arrival + 1;
                let table = ctx.baseline.as_mut().expect("baseline table");
                table.next_event(t_from, rng).map(|t| self.arrival + t - 1)
            }
            _ => None,
        };
        Ok(step.filter(|&s| s <= limit))
    }

    /// Whether this player transmits at global `step`. Must be called for
    /// every step under [`Sampling::PerSlot`]; under [`Sampling::Skip`] it
    /// only needs to be called on scheduled steps.
    pub fn poll(&mut self, step: u64, ctx: &mut ProtocolCtx) -> Result<bool, ProtocolError> {
        if self.is_done() {
            return Ok(false);
        }
        if step < self.arrival {
            return Err(ProtocolError::ObservationBeforeArrival {
                arrival: self.arrival,
                step,
            });
        }
        let fired = match ctx.sampling {
            Sampling::Skip => {
                let mut fired = false;
                for role in [MAIN, JAM] {
                    if self.next[role] == Some(step) {
                        fired = true;
                        self.next[role] = self.draw_next(role, step + 1, ctx)?;
                    }
                }
                fired
            }
            Sampling::PerSlot => self.decide_now(step, ctx)?,
        };
        if fired {
            self.attempts += 1;
        }
        Ok(fired)
    }

    fn decide_now(&mut self, step: u64, ctx: &mut ProtocolCtx) -> Result<bool, ProtocolError> {
        let here = ChannelId::of_step(step);
        let rng = &mut self.rng;
        match &mut self.phase {
            Phase::ChannelChoosing { channel, backoff } | Phase::BatchSync { channel, backoff } => {
                if *channel != here {
                    return Ok(false);
                }
                backoff.decide(here.local_index(step), rng)
            }
            Phase::SingleBackoff { backoff } => backoff.decide(step, rng),
            Phase::BatchExec { batch, jam, origin } => {
                if step <= *origin {
                    return Ok(false);
                }
                if here == batch.channel {
                    batch.step = (step - *origin) / 2;
                    Ok(batch_decide(batch, rng))
                } else {
                    jam.step = (step - *origin).div_ceil(2);
                    Ok(jam_decide(jam, rng))
                }
            }
            Phase::Aging => {
                let t = step - self.arrival + 1;
                Ok(match ctx.protocol {
                    Protocol::PolyBackoff { gamma } => poly_backoff_decide(t, gamma, rng),
                    _ => exp_backoff_decide(t, rng),
                })
            }
            Phase::Done => Ok(false),
        }
    }

    /// Applies what the player saw in slot `step`. Returns whether the phase
    /// changed.
    pub fn observe(&mut self, obs: PlayerObservation, step: u64, ctx: &mut ProtocolCtx) -> Result<bool, ProtocolError> {
        if self.is_done() {
            return Err(ProtocolError::PlayerDone);
        }
        if step < self.arrival {
            return Err(ProtocolError::ObservationBeforeArrival {
                arrival: self.arrival,
                step,
            });
        }
        let seen = obs.channel;
        let next = match (obs.kind, &self.phase) {
            (ObservationKind::MySuccess, _) => Phase::Done,
            (ObservationKind::NoSuccess, _) => return Ok(false),
            (ObservationKind::OtherSuccess, Phase::ChannelChoosing { .. }) => {
                let channel = seen.other();
                let start = channel.first_local_at_or_after(step + 1);
                Phase::BatchSync {
                    channel,
                    backoff: fresh_backoff(ctx.c, start),
                }
            }
            (ObservationKind::OtherSuccess, Phase::BatchSync { channel, .. }) if *channel == seen => {
                batch_phase(seen, step, ctx.c2)
            }
            (ObservationKind::OtherSuccess, Phase::BatchExec { jam, .. }) if jam.channel == seen => {
                batch_phase(seen, step, ctx.c2)
            }
            (ObservationKind::OtherSuccess, _) => return Ok(false),
        };
        self.phase = next;
        self.phase_entered = step;
        if self.is_done() {
            self.next = [None, None];
        } else {
            self.schedule_all(ctx, step + 1)?;
        }
        Ok(true)
    }

    /// Observations for earlier slots followed by the decision for `step`.
    pub fn step(
        &mut self,
        observations: &[(u64, PlayerObservation)],
        step: u64,
        ctx: &mut ProtocolCtx,
    ) -> Result<bool, ProtocolError> {
        for &(at, obs) in observations {
            if at >= step {
                return Err(ProtocolError::SlotWentBackwards {
                    previous: at,
                    requested: step,
                });
            }
            self.observe(obs, at, ctx)?;
            if self.is_done() {
                return Ok(false);
            }
        }
        self.poll(step, ctx)
    }
}

fn fresh_backoff(c: u64, local_start: u64) -> BackoffState {
    BackoffState::new(c, local_start).expect("c validated by ProtocolCtx")
}

fn batch_phase(channel: ChannelId, origin: u64, c2: u64) -> Phase {
    Phase::BatchExec {
        batch: BatchState::new(channel),
        jam: JamState::new(channel.other(), c2),
        origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngPlan, StreamId};
    use alloc::vec::Vec;

    fn ctx(protocol: Protocol, sampling: Sampling) -> ProtocolCtx {
        ProtocolCtx::new(protocol, 4, 4, sampling, ChannelChoice::AlwaysA, 1 << 20).unwrap()
    }

    fn rng(i: u64) -> StreamRng {
        RngPlan::new(11).stream(StreamId::Player(i))
    }

    fn other(ch: ChannelId) -> PlayerObservation {
        PlayerObservation {
            kind: ObservationKind::OtherSuccess,
            channel: ch,
        }
    }

    fn nothing(ch: ChannelId) -> PlayerObservation {
        PlayerObservation {
            kind: ObservationKind::NoSuccess,
            channel: ch,
        }
    }

    #[test]
    fn phase_one_switches_to_the_other_channel() {
        let mut cx = ctx(Protocol::Main, Sampling::Skip);
        let mut p = PlayerState::arrive(PlayerId(1), 0, rng(1), &mut cx).unwrap();
        assert_eq!(p.backoff_channel(), Some(ChannelId::A));
        assert!(p.observe(other(ChannelId::A), 5, &mut cx).unwrap());
        assert_eq!(p.phase_kind(), PhaseKind::BatchSync);
        assert_eq!(p.backoff_channel(), Some(ChannelId::B));
        // success on the channel it is not synchronizing on: nothing happens
        assert!(!p.observe(other(ChannelId::A), 7, &mut cx).unwrap());
        assert!(p.observe(other(ChannelId::B), 8, &mut cx).unwrap());
        assert_eq!(p.batch_channel(), Some(ChannelId::B));
    }

    #[test]
    fn batch_restarts_on_jam_channel_success() {
        let mut cx = ctx(Protocol::Main, Sampling::Skip);
        let mut p = PlayerState::in_batch(PlayerId(1), 1, ChannelId::A, rng(2), &mut cx).unwrap();
        assert!(!p.observe(other(ChannelId::A), 3, &mut cx).unwrap());
        assert!(p.observe(other(ChannelId::B), 10, &mut cx).unwrap());
        match p.phase() {
            Phase::BatchExec { batch, jam, origin } => {
                assert_eq!(batch.channel, ChannelId::B);
                assert_eq!(jam.channel, ChannelId::A);
                assert_eq!((batch.step, jam.step, *origin), (1, 1, 10));
            }
            other => panic!("{other:?}"),
        }
        // i = 1 on both channels is certain
        assert_eq!(p.scheduled(), [Some(12), Some(11)]);
    }

    #[test]
    fn my_success_ends_everything() {
        for protocol in [Protocol::Main, Protocol::ExpBackoff, Protocol::PureBackoff] {
            let mut cx = ctx(protocol, Sampling::PerSlot);
            let mut p = PlayerState::arrive(PlayerId(3), 0, rng(3), &mut cx).unwrap();
            let mine = PlayerObservation {
                kind: ObservationKind::MySuccess,
                channel: ChannelId::B,
            };
            assert!(p.observe(mine, 4, &mut cx).unwrap());
            assert!(p.is_done());
            assert!((5..500).all(|s| !p.poll(s, &mut cx).unwrap()));
            assert_eq!(
                p.observe(nothing(ChannelId::A), 501, &mut cx),
                Err(ProtocolError::PlayerDone)
            );
        }
    }

    #[test]
    fn observation_before_arrival_is_rejected() {
        let mut cx = ctx(Protocol::Main, Sampling::Skip);
        let mut p = PlayerState::arrive(PlayerId(1), 50, rng(1), &mut cx).unwrap();
        assert!(matches!(
            p.observe(other(ChannelId::A), 49, &mut cx),
            Err(ProtocolError::ObservationBeforeArrival { .. })
        ));
    }

    /// Silent, collided and jammed slots all reach the player as NoSuccess,
    /// so swapping one for another cannot change its decisions.
    #[test]
    fn no_success_never_changes_state() {
        let mut cx = ctx(Protocol::Main, Sampling::PerSlot);
        let mut a = PlayerState::arrive(PlayerId(1), 0, rng(4), &mut cx).unwrap();
        let mut b = a.clone();
        let mut da = Vec::new();
        let mut db = Vec::new();
        for s in 0..3000u64 {
            da.push(a.poll(s, &mut cx).unwrap());
            a.observe(nothing(ChannelId::of_step(s)), s, &mut cx).unwrap();
            db.push(b.poll(s, &mut cx).unwrap());
        }
        assert_eq!(da, db);
    }

    /// Skip sampling and slot-by-slot polling of the same backoff phase give
    /// the same broadcasts from the same stream.
    #[test]
    fn backoff_phase_same_in_both_samplings() {
        for i in 0..30 {
            let mut cs = ctx(Protocol::Main, Sampling::Skip);
            let mut cp = ctx(Protocol::Main, Sampling::PerSlot);
            let mut s = PlayerState::arrive(PlayerId(i), 7, rng(i), &mut cs).unwrap();
            let mut p = PlayerState::arrive(PlayerId(i), 7, rng(i), &mut cp).unwrap();
            for step in 7..5000 {
                assert_eq!(
                    s.poll(step, &mut cs).unwrap(),
                    p.poll(step, &mut cp).unwrap(),
                    "step {step}"
                );
            }
        }
    }

    #[test]
    fn batch_broadcast_probabilities_per_slot() {
        let mut cx = ctx(Protocol::Main, Sampling::PerSlot);
        let runs = 20_000;
        let mut batch_hits = [0u32; 12];
        let mut jam_hits = [0u32; 12];
        for r in 0..runs {
            let mut p = PlayerState::in_batch(PlayerId(r), 0, ChannelId::B, rng(r), &mut cx).unwrap();
            for step in 1..=22u64 {
                let hit = p.poll(step, &mut cx).unwrap() as u32;
                if step % 2 == 0 {
                    batch_hits[(step / 2) as usize - 1] += hit;
                } else {
                    jam_hits[step.div_ceil(2) as usize - 1] += hit;
                }
            }
        }
        for i in 1..=11u64 {
            let fb = batch_hits[i as usize - 1] as f64 / runs as f64;
            let fj = jam_hits[i as usize - 1] as f64 / runs as f64;
            let pb = super::super::batch::batch_probability(i);
            let pj = super::super::batch::jam_probability(i, 4);
            assert!((fb - pb).abs() < 5.0 * libm::sqrt(pb * (1.0 - pb) / runs as f64) + 1e-12);
            assert!((fj - pj).abs() < 5.0 * libm::sqrt(pj * (1.0 - pj) / runs as f64) + 1e-12);
        }
    }

    #[test]
    fn exp_baseline_broadcasts_on_arrival() {
        for sampling in [Sampling::Skip, Sampling::PerSlot] {
            let mut cx = ctx(Protocol::ExpBackoff, sampling);
            let mut p = PlayerState::arrive(PlayerId(0), 10, rng(0), &mut cx).unwrap();
            assert!(p.poll(10, &mut cx).unwrap());
            assert!(p.poll(11, &mut cx).unwrap());
            assert_eq!(p.attempts(), 2);
        }
    }

    #[test]
    fn step_applies_observations_then_decides() {
        let mut cx = ctx(Protocol::Main, Sampling::PerSlot);
        let mut p = PlayerState::arrive(PlayerId(1), 0, rng(9), &mut cx).unwrap();
        p.step(&[(3, other(ChannelId::A))], 4, &mut cx).unwrap();
        assert_eq!(p.phase_kind(), PhaseKind::BatchSync);
        assert!(p.step(&[(4, nothing(ChannelId::B))], 4, &mut cx).is_err());
    }

    #[test]
    fn bad_constants_rejected() {
        assert!(ProtocolCtx::new(Protocol::Main, 1, 4, Sampling::Skip, ChannelChoice::Coin, 10).is_err());
        assert!(ProtocolCtx::new(Protocol::Main, 4, 0, Sampling::Skip, ChannelChoice::Coin, 10).is_err());
        assert!(ProtocolCtx::new(
            Protocol::PolyBackoff { gamma: 0.0 },
            4,
            4,
            Sampling::Skip,
            ChannelChoice::Coin,
            10
        )
        .is_err());
    }
}

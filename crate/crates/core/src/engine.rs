//! The slot loop.
//!
//! Each global step: the adversary announces arrivals, new players are
//! created with their own random streams, the players that transmit are
//! collected, the slot is resolved, successes are delivered, and a trace row
//! is recorded. Batch operations are tracked from the players' own phase
//! transitions.
//!
//! [`EngineMode::EventDriven`] visits a player only on steps where it
//! transmits and after successes it reacts to; broadcasts are skip-sampled.
//! [`EngineMode::PerSlotReference`] polls and informs every live player on
//! every step with plain coin flips. Both draw from the same distribution.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::adversary::{jam_schedule, Adversary, AdversaryPolicy, VisibleHistory};
use crate::channel::{observe, resolve_slot, ChannelId, ObservationKind, PlayerId, PlayerObservation, SlotOutcome};
use crate::error::{ConfigError, EngineError};
use crate::protocols::{PhaseKind, PlayerState, ProtocolCtx, Sampling};
use crate::rng::{RngPlan, StreamId, StreamRng};
use crate::trace::{BatchEpisode, EpisodeEnd, PlayerRecord, PropertyViolations, SimTrace, StepRecord};

pub use crate::protocols::{ChannelChoice, Protocol};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineMode {
    EventDriven,
    PerSlotReference,
}

/// Extra jammed steps from the two-stage jamming construction, on top of
/// whatever the arrival policy does.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JammingSpec {
    pub n: u64,
    pub c: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    /// Backoff base.
    pub c: u64,
    /// Analysis constant for batch windows and truncation thresholds.
    pub c1: u64,
    /// Jamming strength.
    pub c2: u64,
    pub adversary: AdversaryPolicy,
    pub horizon: u64,
    pub seed: u64,
    pub jamming: Option<JammingSpec>,
    pub checkpoints: Vec<u64>,
    pub channel_choice: ChannelChoice,
    pub mode: EngineMode,
}

impl SimConfig {
    pub fn new(protocol: Protocol, adversary: AdversaryPolicy, horizon: u64, seed: u64) -> Self {
        SimConfig {
            protocol,
            c: 4,
            c1: 16,
            c2: 4,
            adversary,
            horizon,
            seed,
            jamming: None,
            checkpoints: Vec::new(),
            channel_choice: ChannelChoice::Coin,
            mode: EngineMode::EventDriven,
        }
    }

    pub fn main_protocol(adversary: AdversaryPolicy, horizon: u64, seed: u64) -> Self {
        Self::new(Protocol::Main, adversary, horizon, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.c < 2 {
            return Err(ConfigError::BackoffBase(self.c));
        }
        if self.c2 < 1 {
            return Err(ConfigError::JamConstant(self.c2));
        }
        if self.c1 < 1 {
            return Err(ConfigError::Adversary("c1 must be at least 1"));
        }
        if let Protocol::PolyBackoff { gamma } = self.protocol {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(ConfigError::Exponent(gamma));
            }
        }
        if self.checkpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(ConfigError::CheckpointsUnsorted);
        }
        if let Some(&last) = self.checkpoints.last() {
            if last >= self.horizon.max(1) {
                return Err(ConfigError::CheckpointBeyondHorizon {
                    checkpoint: last,
                    horizon: self.horizon,
                });
            }
        }
        if let Some(JammingSpec { n, c }) = self.jamming {
            if c == 0 || n < 2 * c {
                return Err(ConfigError::DegenerateJamming { n, c });
            }
        }
        if matches!(self.adversary, AdversaryPolicy::BatchStart { .. }) && self.protocol != Protocol::Main {
            return Err(ConfigError::Adversary("batch_start needs the main protocol"));
        }
        self.adversary.validate()
    }
}

/// Runs one configuration to its horizon.
pub fn run(config: &SimConfig) -> Result<SimTrace, EngineError> {
    config.validate()?;
    let mut engine = Engine::new(config)?;
    for step in 0..config.horizon {
        engine.step(step)?;
    }
    Ok(engine.finish())
}

/// Runs every configuration, in input order. A failing run does not stop
/// the others.
pub fn sweep(configs: &[SimConfig]) -> Vec<Result<SimTrace, EngineError>> {
    configs.iter().map(run).collect()
}

struct OpenEpisode {
    start: u64,
    channel: ChannelId,
    participants: u64,
    successes: u64,
    arrivals: u64,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    plan: RngPlan,
    ctx: ProtocolCtx,
    adversary: Adversary,
    jammed: BTreeSet<u64>,
    history: VisibleHistory,
    players: Vec<PlayerState>,
    records: Vec<PlayerRecord>,
    generation: Vec<u32>,
    heap: BinaryHeap<Reverse<(u64, usize, u32)>>,
    /// Live players, for per-slot polling.
    live: Vec<usize>,
    phase1: Vec<usize>,
    /// Batch synchronization, by channel.
    sync: [Vec<usize>; 2],
    /// Batch execution, by jammed channel.
    exec: [Vec<usize>; 2],
    /// Live batch participants by batch origin.
    origins: BTreeMap<u64, u64>,
    episode: Option<OpenEpisode>,
    rows: Vec<StepRecord>,
    episodes: Vec<BatchEpisode>,
    violations: PropertyViolations,
    population: u64,
    broadcasters: Vec<PlayerId>,
    /// Handed to adversaries that never draw.
    idle_rng: StreamRng,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, EngineError> {
        let plan = RngPlan::new(cfg.seed);
        let sampling = match cfg.mode {
            EngineMode::EventDriven => Sampling::Skip,
            EngineMode::PerSlotReference => Sampling::PerSlot,
        };
        let ctx = ProtocolCtx::new(cfg.protocol, cfg.c, cfg.c2, sampling, cfg.channel_choice, cfg.horizon)?;
        let adversary = Adversary::new(cfg.adversary.clone(), &plan)?;
        let mut jammed = adversary.jammed_steps().clone();
        if let Some(JammingSpec { n, c }) = cfg.jamming {
            jammed.extend(jam_schedule(n, c, &mut plan.stream(StreamId::Jamming))?);
        }
        Ok(Engine {
            cfg,
            plan,
            ctx,
            adversary,
            jammed,
            history: VisibleHistory::new(),
            players: Vec::new(),
            records: Vec::new(),
            generation: Vec::new(),
            heap: BinaryHeap::new(),
            live: Vec::new(),
            phase1: Vec::new(),
            sync: [Vec::new(), Vec::new()],
            exec: [Vec::new(), Vec::new()],
            origins: BTreeMap::new(),
            episode: None,
            rows: Vec::with_capacity(cfg.horizon.min(1 << 24) as usize),
            episodes: Vec::new(),
            violations: PropertyViolations::default(),
            population: 0,
            broadcasters: Vec::new(),
            idle_rng: plan.stream(StreamId::Engine),
        })
    }

    fn event_driven(&self) -> bool {
        self.cfg.mode == EngineMode::EventDriven
    }

    fn add_player(&mut self, state: PlayerState, step: u64) -> usize {
        let id = self.players.len();
        self.records.push(PlayerRecord {
            arrival: step,
            departure: None,
            attempts: 0,
            synced_at: None,
            batched_at: state.batch_origin(),
            final_phase: state.phase_kind(),
        });
        if let Some(origin) = state.batch_origin() {
            *self.origins.entry(origin).or_insert(0) += 1;
        }
        self.players.push(state);
        self.generation.push(0);
        self.live.push(id);
        self.regroup(id);
        self.reschedule(id);
        id
    }

    fn regroup(&mut self, id: usize) {
        if !self.event_driven() {
            return;
        }
        let p = &self.players[id];
        match p.phase_kind() {
            PhaseKind::ChannelChoosing => self.phase1.push(id),
            PhaseKind::BatchSync => self.sync[p.backoff_channel().unwrap().index()].push(id),
            PhaseKind::BatchExec => self.exec[p.batch_channel().unwrap().other().index()].push(id),
            PhaseKind::SingleBackoff | PhaseKind::Aging | PhaseKind::Done => {}
        }
    }

    fn reschedule(&mut self, id: usize) {
        if !self.event_driven() {
            return;
        }
        self.generation[id] = self.generation[id].wrapping_add(1);
        if let Some(t) = self.players[id].next_broadcast() {
            if t < self.cfg.horizon {
                self.heap.push(Reverse((t, id, self.generation[id])));
            }
        }
    }

    fn step(&mut self, s: u64) -> Result<(), EngineError> {
        let population_before = self.population;
        let mut arrivals = 0;
        if s == 0 {
            for _ in 0..self.adversary.initial_batch() {
                let id = self.players.len() as u64;
                let rng = self.plan.stream(StreamId::Player(id));
                let state = PlayerState::in_batch(PlayerId(id), 0, ChannelId::of_step(0), rng, &mut self.ctx)?;
                self.add_player(state, 0);
                arrivals += 1;
            }
            if arrivals > 0 {
                self.episode = Some(OpenEpisode {
                    start: 0,
                    channel: ChannelId::of_step(0),
                    participants: arrivals,
                    successes: 0,
                    arrivals: 0,
                });
            }
        }
        let fresh = if self.adversary.uses_slot_randomness() {
            let mut rng = self.plan.stream(StreamId::AdversarySlot(s));
            self.adversary.next_arrivals(&self.history, &mut rng)?
        } else {
            self.adversary.next_arrivals(&self.history, &mut self.idle_rng)?
        };
        for _ in 0..fresh {
            let id = self.players.len() as u64;
            let rng = self.plan.stream(StreamId::Player(id));
            let state = PlayerState::arrive(PlayerId(id), s, rng, &mut self.ctx)?;
            self.add_player(state, s);
        }
        arrivals += fresh;
        self.population += arrivals;
        if let Some(ep) = &mut self.episode {
            if s > ep.start {
                ep.arrivals += fresh;
            }
        }

        self.collect_broadcasters(s)?;
        self.check_batch_channel(s);
        let outcome = resolve_slot(&self.broadcasters, self.jammed.contains(&s), s);
        let winner = outcome.kind.winner();
        match winner {
            Some(w) => self.deliver_success(s, w)?,
            None => {
                if !self.event_driven() {
                    self.deliver_to_all(&outcome, s)?;
                }
            }
        }
        self.rows.push(StepRecord {
            kind: outcome.kind,
            arrivals,
            population_before,
            broadcasters: self.broadcasters.len() as u64,
        });
        self.history.push_slot(winner);
        if self.population == 0 {
            self.close_episode(s, EpisodeEnd::Emptied);
        }
        Ok(())
    }

    fn collect_broadcasters(&mut self, s: u64) -> Result<(), EngineError> {
        self.broadcasters.clear();
        if self.event_driven() {
            while let Some(&Reverse((t, id, gen))) = self.heap.peek() {
                if t != s {
                    debug_assert!(t > s);
                    break;
                }
                self.heap.pop();
                if gen != self.generation[id] {
                    continue;
                }
                if self.players[id].poll(s, &mut self.ctx)? {
                    self.broadcasters.push(PlayerId(id as u64));
                }
                self.reschedule(id);
            }
        } else {
            self.live.retain(|&id| !self.players[id].is_done());
            for &id in &self.live {
                if self.players[id].poll(s, &mut self.ctx)? {
                    self.broadcasters.push(PlayerId(id as u64));
                }
            }
        }
        Ok(())
    }

    /// Transmitters on the channel of a running batch must be participants
    /// or phase-1 players that arrived during the batch.
    fn check_batch_channel(&mut self, s: u64) {
        let Some(ep) = &self.episode else { return };
        if ep.channel != ChannelId::of_step(s) || s <= ep.start {
            return;
        }
        for b in &self.broadcasters {
            let p = &self.players[b.0 as usize];
            let ok = p.batch_origin() == Some(ep.start)
                || (p.phase_kind() == PhaseKind::ChannelChoosing && p.arrival() > ep.start);
            if !ok {
                self.violations.foreign_batch_broadcasters += 1;
            }
        }
    }

    fn deliver_to_all(&mut self, outcome: &SlotOutcome, s: u64) -> Result<(), EngineError> {
        for i in 0..self.live.len() {
            let id = self.live[i];
            let obs = observe(outcome, PlayerId(id as u64));
            self.players[id].observe(obs, s, &mut self.ctx)?;
        }
        Ok(())
    }

    fn deliver_success(&mut self, s: u64, winner: PlayerId) -> Result<(), EngineError> {
        let channel = ChannelId::of_step(s);
        let w = winner.0 as usize;
        let mine = PlayerObservation {
            kind: ObservationKind::MySuccess,
            channel,
        };
        if let Some(origin) = self.players[w].batch_origin() {
            self.leave_origin(origin);
        }
        self.players[w].observe(mine, s, &mut self.ctx)?;
        self.records[w].departure = Some(s);
        self.population -= 1;
        self.reschedule(w);

        let targets: Vec<usize> = if self.event_driven() {
            let mut t = core::mem::take(&mut self.phase1);
            t.append(&mut self.sync[channel.index()]);
            t.append(&mut self.exec[channel.index()]);
            t
        } else {
            self.live.clone()
        };
        let seen = PlayerObservation {
            kind: ObservationKind::OtherSuccess,
            channel,
        };
        let mut entering = 0;
        for id in targets {
            if id == w || self.players[id].is_done() {
                continue;
            }
            let old_origin = self.players[id].batch_origin();
            let changed = self.players[id].observe(seen, s, &mut self.ctx)?;
            if changed {
                match self.players[id].phase_kind() {
                    PhaseKind::BatchSync => {
                        self.records[id].synced_at.get_or_insert(s);
                    }
                    PhaseKind::BatchExec => {
                        self.records[id].batched_at.get_or_insert(s);
                        if let Some(origin) = old_origin {
                            self.leave_origin(origin);
                        }
                        *self.origins.entry(s).or_insert(0) += 1;
                        entering += 1;
                    }
                    _ => {}
                }
                self.reschedule(id);
            }
            self.regroup(id);
        }

        if let Some(ep) = &mut self.episode {
            ep.successes += 1;
            if ep.channel != channel {
                self.close_episode(s, EpisodeEnd::JamChannelSuccess);
            } else if entering > 0 {
                self.close_episode(s, EpisodeEnd::Superseded);
            }
        }
        if self.origins.len() > 1 {
            self.violations.concurrent_batches += 1;
        }
        if entering > 0 {
            self.episode = Some(OpenEpisode {
                start: s,
                channel,
                participants: entering,
                successes: 0,
                arrivals: 0,
            });
            self.check_batch_start(s, channel);
        }
        Ok(())
    }

    fn leave_origin(&mut self, origin: u64) {
        if let Some(k) = self.origins.get_mut(&origin) {
            *k -= 1;
            if *k == 0 {
                self.origins.remove(&origin);
            }
        }
    }

    /// At the start of a batch on `channel`, every live non-participant must
    /// have just begun synchronizing on the other channel.
    fn check_batch_start(&mut self, s: u64, channel: ChannelId) {
        let candidates: Vec<usize> = if self.event_driven() {
            let mut c = self.phase1.clone();
            c.extend_from_slice(&self.sync[0]);
            c.extend_from_slice(&self.sync[1]);
            c
        } else {
            self.live.clone()
        };
        for id in candidates {
            let p = &self.players[id];
            if p.is_done() || p.batch_origin().is_some() {
                continue;
            }
            let ok = p.arrival() > s
                || (p.phase_kind() == PhaseKind::BatchSync
                    && p.backoff_channel() == Some(channel.other())
                    && p.phase_entered() == s);
            if !ok {
                self.violations.stale_non_participants += 1;
            }
        }
    }

    fn close_episode(&mut self, s: u64, end: EpisodeEnd) {
        if let Some(ep) = self.episode.take() {
            self.episodes.push(BatchEpisode {
                start_step: ep.start,
                end_step: s.max(ep.start),
                channel: ep.channel,
                participants: ep.participants,
                successes: ep.successes,
                arrivals: ep.arrivals,
                end,
            });
        }
    }

    fn finish(mut self) -> SimTrace {
        if self.cfg.horizon > 0 {
            self.close_episode(self.cfg.horizon - 1, EpisodeEnd::Horizon);
        }
        for (rec, p) in self.records.iter_mut().zip(&self.players) {
            rec.attempts = p.attempts();
            rec.final_phase = p.phase_kind();
        }
        debug_assert_eq!(
            self.population,
            self.records.iter().filter(|r| r.departure.is_none()).count() as u64
        );
        SimTrace {
            seed: self.cfg.seed,
            horizon: self.cfg.horizon,
            rows: self.rows,
            players: self.records,
            episodes: self.episodes,
            violations: self.violations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::OutcomeKind;

    #[test]
    fn horizon_zero_is_empty() {
        let cfg = SimConfig::main_protocol(AdversaryPolicy::burst(4, 0), 0, 1);
        let t = run(&cfg).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn lone_player_succeeds_on_first_broadcast() {
        for seed in 0..50 {
            let cfg = SimConfig::main_protocol(AdversaryPolicy::burst(1, 0), 4096, seed);
            let t = run(&cfg).unwrap();
            let first_tx = t.rows.iter().position(|r| r.broadcasters > 0).unwrap();
            assert!(matches!(t.rows[first_tx].kind, OutcomeKind::Success(_)));
            assert_eq!(t.total_successes(), 1);
            assert_eq!(t.total_attempts(), 1);
        }
    }

    #[test]
    fn invalid_configs_fail_before_running() {
        let mut cfg = SimConfig::main_protocol(AdversaryPolicy::burst(4, 0), 100, 1);
        cfg.c = 1;
        assert_eq!(run(&cfg), Err(EngineError::Config(ConfigError::BackoffBase(1))));
        let mut cfg = SimConfig::main_protocol(AdversaryPolicy::burst(4, 0), 100, 1);
        cfg.checkpoints = vec![10, 5];
        assert!(run(&cfg).is_err());
        cfg.checkpoints = vec![5, 100];
        assert!(run(&cfg).is_err());
        let mut cfg = SimConfig::main_protocol(AdversaryPolicy::burst(4, 0), 100, 1);
        cfg.jamming = Some(JammingSpec { n: 3, c: 4 });
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = SimConfig::main_protocol(AdversaryPolicy::burst(64, 0), 8192, 7);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn population_balances() {
        let cfg = SimConfig::main_protocol(AdversaryPolicy::spread(200, 3000), 20_000, 3);
        let t = run(&cfg).unwrap();
        let mut pop = 0u64;
        for r in &t.rows {
            assert_eq!(r.population_before, pop);
            pop += r.arrivals;
            if r.kind.is_success() {
                pop -= 1;
            }
        }
        assert_eq!(pop, t.final_population());
        assert_eq!(t.violations.total(), 0);
    }

    #[test]
    fn sweep_keeps_input_order() {
        let base = SimConfig::main_protocol(AdversaryPolicy::burst(32, 0), 2048, 0);
        let configs: Vec<_> = [5u64, 1, 9].iter().map(|&s| base.with_seed(s)).collect();
        let out = sweep(&configs);
        for (cfg, t) in configs.iter().zip(out) {
            assert_eq!(t.unwrap(), run(cfg).unwrap());
        }
    }
}

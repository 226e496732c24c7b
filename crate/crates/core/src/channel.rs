//! The slotted channel: virtual channels, slot resolution and what players
//! are allowed to see.
//!
//! Global steps alternate between two virtual channels. Odd steps belong to
//! [`ChannelId::A`], even steps to [`ChannelId::B`]. Players have no global
//! clock, so nothing in the protocols depends on which parity is which.

use core::fmt;

/// Engine-side player handle. Protocol decisions never look at it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlayerId(pub u64);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelId {
    A,
    B,
}

impl ChannelId {
    pub const ALL: [ChannelId; 2] = [ChannelId::A, ChannelId::B];

    #[inline]
    pub fn of_step(step: u64) -> ChannelId {
        if step % 2 == 1 {
            ChannelId::A
        } else {
            ChannelId::B
        }
    }

    #[inline]
    pub fn other(self) -> ChannelId {
        match self {
            ChannelId::A => ChannelId::B,
            ChannelId::B => ChannelId::A,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        match self {
            ChannelId::A => 0,
            ChannelId::B => 1,
        }
    }

    /// Channel-local index of `step`, which must lie on this channel.
    ///
    /// A-slots 1, 3, 5, ... are local 1, 2, 3, ...; B-slots 0, 2, 4, ... are
    /// local 0, 1, 2, ...
    #[inline]
    pub fn local_index(self, step: u64) -> u64 {
        debug_assert_eq!(ChannelId::of_step(step), self);
        step.div_ceil(2)
    }

    /// Global step of channel-local slot `local`.
    #[inline]
    pub fn global_step(self, local: u64) -> u64 {
        match self {
            ChannelId::A => {
                debug_assert!(local >= 1);
                2 * local - 1
            }
            ChannelId::B => 2 * local,
        }
    }

    /// Local index of the first slot of this channel at or after `step`.
    #[inline]
    pub fn first_local_at_or_after(self, step: u64) -> u64 {
        if ChannelId::of_step(step) == self {
            self.local_index(step)
        } else {
            self.local_index(step + 1)
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelId::A => "A",
            ChannelId::B => "B",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Silent,
    Success(PlayerId),
    Collision,
    Jammed,
}

impl OutcomeKind {
    pub fn is_success(&self) -> bool {
        matches!(self, OutcomeKind::Success(_))
    }

    pub fn winner(&self) -> Option<PlayerId> {
        match *self {
            OutcomeKind::Success(p) => Some(p),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OutcomeKind::Silent => "silent",
            OutcomeKind::Success(_) => "success",
            OutcomeKind::Collision => "collision",
            OutcomeKind::Jammed => "jammed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SlotOutcome {
    pub kind: OutcomeKind,
    pub global_step: u64,
    pub channel: ChannelId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservationKind {
    MySuccess,
    OtherSuccess,
    NoSuccess,
}

/// The only information a player receives about a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlayerObservation {
    pub kind: ObservationKind,
    pub channel: ChannelId,
}

/// Resolves one slot.
///
/// `broadcasters` may contain the same player more than once (a backoff
/// schedule can pick a slot twice); repeated entries are one transmission.
pub fn resolve_slot(broadcasters: &[PlayerId], jammed: bool, global_step: u64) -> SlotOutcome {
    let channel = ChannelId::of_step(global_step);
    let kind = if jammed {
        OutcomeKind::Jammed
    } else {
        match broadcasters.split_first() {
            None => OutcomeKind::Silent,
            Some((&first, rest)) => {
                if rest.iter().all(|&p| p == first) {
                    OutcomeKind::Success(first)
                } else {
                    OutcomeKind::Collision
                }
            }
        }
    };
    SlotOutcome {
        kind,
        global_step,
        channel,
    }
}

/// What `observer` learns from `outcome`. Silence, collisions and jamming
/// are indistinguishable.
pub fn observe(outcome: &SlotOutcome, observer: PlayerId) -> PlayerObservation {
    let kind = match outcome.kind {
        OutcomeKind::Success(w) if w == observer => ObservationKind::MySuccess,
        OutcomeKind::Success(_) => ObservationKind::OtherSuccess,
        OutcomeKind::Silent | OutcomeKind::Collision | OutcomeKind::Jammed => ObservationKind::NoSuccess,
    };
    PlayerObservation {
        kind,
        channel: outcome.channel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P1: PlayerId = PlayerId(1);
    const P2: PlayerId = PlayerId(2);

    #[test]
    fn resolve_examples() {
        let o = resolve_slot(&[], false, 7);
        assert_eq!((o.kind, o.channel), (OutcomeKind::Silent, ChannelId::A));
        let o = resolve_slot(&[P1], false, 8);
        assert_eq!((o.kind, o.channel), (OutcomeKind::Success(P1), ChannelId::B));
        assert_eq!(resolve_slot(&[P1, P2], false, 9).kind, OutcomeKind::Collision);
        assert_eq!(resolve_slot(&[P1], true, 9).kind, OutcomeKind::Jammed);
    }

    #[test]
    fn duplicate_entries_are_one_transmission() {
        assert_eq!(resolve_slot(&[P1, P1, P1], false, 3).kind, OutcomeKind::Success(P1));
        assert_eq!(resolve_slot(&[P1, P1, P2], false, 3).kind, OutcomeKind::Collision);
    }

    #[test]
    fn observations() {
        let s = resolve_slot(&[P1], false, 4);
        assert_eq!(observe(&s, P1).kind, ObservationKind::MySuccess);
        assert_eq!(observe(&s, P2).kind, ObservationKind::OtherSuccess);
        let c = resolve_slot(&[P1, P2], false, 4);
        let e = resolve_slot(&[], false, 4);
        let j = resolve_slot(&[P1], true, 4);
        assert_eq!(observe(&c, P1), observe(&e, P1));
        assert_eq!(observe(&c, P1), observe(&j, P1));
        assert_eq!(observe(&c, P1).kind, ObservationKind::NoSuccess);
    }

    #[test]
    fn indistinguishable_for_every_observer_and_step() {
        for step in 0..8u64 {
            for who in [P1, P2, PlayerId(99)] {
                let outcomes = [
                    SlotOutcome {
                        kind: OutcomeKind::Silent,
                        global_step: step,
                        channel: ChannelId::of_step(step),
                    },
                    SlotOutcome {
                        kind: OutcomeKind::Collision,
                        global_step: step,
                        channel: ChannelId::of_step(step),
                    },
                    SlotOutcome {
                        kind: OutcomeKind::Jammed,
                        global_step: step,
                        channel: ChannelId::of_step(step),
                    },
                ];
                let seen: alloc::vec::Vec<_> = outcomes.iter().map(|o| observe(o, who)).collect();
                assert!(seen.windows(2).all(|w| w[0] == w[1]));
            }
        }
    }

    #[test]
    fn channel_parity_and_local_indices() {
        assert_eq!(ChannelId::A.other(), ChannelId::B);
        assert_eq!(ChannelId::B.other(), ChannelId::A);
        for step in 0..100u64 {
            let ch = ChannelId::of_step(step);
            assert_eq!(ch, ChannelId::of_step(step + 2));
            assert_eq!(ch.global_step(ch.local_index(step)), step);
        }
        assert_eq!(ChannelId::A.first_local_at_or_after(0), 1);
        assert_eq!(ChannelId::B.first_local_at_or_after(0), 0);
        assert_eq!(ChannelId::B.first_local_at_or_after(3), 2);
        assert_eq!(ChannelId::A.first_local_at_or_after(3), 2);
    }
}

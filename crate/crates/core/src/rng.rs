//! Deterministic random stream derivation.
//!
//! Every consumer gets its own ChaCha stream keyed by the master seed. The
//! stream number is a pure function of the consumer's identity, so a
//! player's randomness does not depend on how many other players exist or
//! in which order they were created.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const TAG_SHIFT: u32 = 56;

/// Identity of a randomness consumer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamId {
    Engine,
    /// Draws made by the adversary when deciding slot `t`.
    AdversarySlot(u64),
    /// One-off draws made when an adversary policy is constructed.
    AdversarySetup,
    /// The jammed-step schedule.
    Jamming,
    Player(u64),
    /// Free-form streams for harnesses and tests.
    Aux(u64),
}

impl StreamId {
    fn number(self) -> u64 {
        let (tag, index) = match self {
            StreamId::Engine => (0u64, 0u64),
            StreamId::AdversarySlot(t) => (1, t),
            StreamId::AdversarySetup => (2, 0),
            StreamId::Jamming => (3, 0),
            StreamId::Player(i) => (4, i),
            StreamId::Aux(i) => (5, i),
        };
        debug_assert!(index < 1 << TAG_SHIFT);
        (tag << TAG_SHIFT) | index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngPlan {
    seed: u64,
}

impl RngPlan {
    pub fn new(seed: u64) -> Self {
        RngPlan { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, id: StreamId) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id.number());
        rng
    }
}

/// Bernoulli draw; `p` outside `[0, 1]` is clamped.
#[inline]
pub fn coin<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p >= 1.0 {
        true
    } else if p > 0.0 {
        rng.gen_bool(p)
    } else {
        false
    }
}

/// Uniform draw on `(0, 1]`.
#[inline]
pub fn unit_open0<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

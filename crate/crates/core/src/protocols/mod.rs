//! Player-side behavior.
//!
//! [`backoff`] is c-backoff, used while a player looks for a channel and
//! while it waits for the next batch. [`batch`] holds the synchronized batch
//! protocol and the jamming protocol run on the idle channel. [`player`]
//! composes them into the three-phase state machine, and [`baseline`] has
//! the single-channel comparison protocols. [`balanced`] checks contention
//! traces against the balanced-execution conditions.

pub mod backoff;
pub mod balanced;
pub mod baseline;
pub mod batch;
pub mod player;

pub use backoff::{backoff_decide, backoff_probability, backoff_transmit_probability, BackoffState};
pub use balanced::{check_balanced, check_balanced_from, BalanceReport};
pub use baseline::{exp_backoff_decide, exp_backoff_probability, poly_backoff_decide, poly_backoff_probability};
pub use batch::{batch_decide, batch_probability, jam_decide, jam_probability, BatchState, JamState};
pub use player::{ChannelChoice, Phase, PhaseKind, PlayerState, Protocol, ProtocolCtx, Sampling};

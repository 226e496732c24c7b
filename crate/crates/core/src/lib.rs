//! Discrete-slot simulator for contention resolution on a multiple access
//! channel without collision detection.
//!
//! Players share a synchronized slotted channel. A broadcast succeeds iff it
//! is the only broadcast in its slot; listeners learn about successes and
//! nothing else. The crate implements the two-virtual-channel protocol
//! (c-backoff channel choosing, batch synchronization, batch execution with
//! probabilistic jamming of the idle channel), exponential and polynomial
//! backoff baselines, arrival/jamming adversaries, and the metrics used to
//! judge them (implicit throughput, broadcast attempts, batch lengths).
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to get
//! `std::error::Error` impls.
//!
//! ```
//! use channelwave_core::adversary::AdversaryPolicy;
//! use channelwave_core::engine::{run, SimConfig};
//! use channelwave_core::metrics;
//!
//! let config = SimConfig::main_protocol(AdversaryPolicy::burst(16, 0), 4096, 1);
//! let trace = run(&config).unwrap();
//! let report = metrics::implicit_throughput(&trace, 4095);
//! assert_eq!(report.arrivals, 16);
//! ```

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod adversary;
pub mod channel;
pub mod engine;
pub mod error;
pub mod hazard;
pub mod metrics;
pub mod oracle;
pub mod protocols;
pub mod rng;
pub mod trace;

pub use channel::{ChannelId, ObservationKind, OutcomeKind, PlayerId, PlayerObservation, SlotOutcome};
pub use engine::{run, sweep, EngineMode, Protocol, SimConfig};
pub use error::{ConfigError, EngineError, ProtocolError};
pub use trace::SimTrace;

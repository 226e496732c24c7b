use core::fmt;

/// Invalid simulation or protocol parameters, detected before any slot runs.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    /// `c` must be at least 2.
    BackoffBase(u64),
    /// `c2` must be at least 1.
    JamConstant(u64),
    /// Polynomial exponent must be finite and positive.
    Exponent(f64),
    /// Probability outside the allowed range.
    Probability {
        index: usize,
        value: f64,
    },
    HorizonZero,
    CheckpointsUnsorted,
    CheckpointBeyondHorizon {
        checkpoint: u64,
        horizon: u64,
    },
    /// Jamming construction needs `n >= 2c` (or `n >= c` for the arrival stage).
    DegenerateJamming {
        n: u64,
        c: u64,
    },
    /// A parameter of an adversary policy is out of range.
    Adversary(&'static str),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::BackoffBase(c) => write!(f, "backoff base c must be >= 2, got {c}"),
            ConfigError::JamConstant(c2) => write!(f, "jamming constant c2 must be >= 1, got {c2}"),
            ConfigError::Exponent(g) => write!(f, "backoff exponent must be positive and finite, got {g}"),
            ConfigError::Probability { index, value } => {
                write!(f, "probability #{index} = {value} is outside [0, 1/2]")
            }
            ConfigError::HorizonZero => write!(f, "horizon must be at least 1"),
            ConfigError::CheckpointsUnsorted => write!(f, "checkpoints must be sorted ascending"),
            ConfigError::CheckpointBeyondHorizon { checkpoint, horizon } => {
                write!(f, "checkpoint {checkpoint} is not below horizon {horizon}")
            }
            ConfigError::DegenerateJamming { n, c } => {
                write!(f, "jamming construction is degenerate for n = {n}, c = {c}")
            }
            ConfigError::Adversary(msg) => write!(f, "adversary: {msg}"),
        }
    }
}

/// Misuse of a protocol state machine. These indicate an engine bug, not bad input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolError {
    /// A backoff schedule was queried for a slot earlier than the previous query.
    SlotWentBackwards { previous: u64, requested: u64 },
    /// A slot before the backoff's start was queried.
    BeforeStart { start: u64, requested: u64 },
    /// A player that already succeeded was asked to act.
    PlayerDone,
    /// An observation refers to a slot the player was not present for.
    ObservationBeforeArrival { arrival: u64, step: u64 },
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::SlotWentBackwards { previous, requested } => {
                write!(f, "slot {requested} requested after slot {previous}")
            }
            ProtocolError::BeforeStart { start, requested } => {
                write!(f, "slot {requested} is not after backoff start {start}")
            }
            ProtocolError::PlayerDone => write!(f, "player already succeeded"),
            ProtocolError::ObservationBeforeArrival { arrival, step } => {
                write!(f, "observation for step {step} precedes arrival at {arrival}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineError {
    Config(ConfigError),
    Protocol(ProtocolError),
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Config(e) => write!(f, "invalid config: {e}"),
            EngineError::Protocol(e) => write!(f, "protocol state error: {e}"),
        }
    }
}

impl From<ConfigError> for EngineError {
    fn from(e: ConfigError) -> Self {
        EngineError::Config(e)
    }
}

impl From<ProtocolError> for EngineError {
    fn from(e: ProtocolError) -> Self {
        EngineError::Protocol(e)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}
#[cfg(feature = "std")]
impl std::error::Error for ProtocolError {}
#[cfg(feature = "std")]
impl std::error::Error for EngineError {}

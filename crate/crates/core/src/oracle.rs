//! Exact small-instance probabilities used as ground truth in tests.

use alloc::vec::Vec;

use crate::error::ConfigError;
use crate::protocols::backoff::{backoff_transmit_probability, epoch_bounds};

/// Independent 0-1 variables, each one with probability at most 1/2.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliVector {
    p: Vec<f64>,
}

impl BernoulliVector {
    pub fn new(p: Vec<f64>) -> Result<Self, ConfigError> {
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=0.5).contains(&value) {
                return Err(ConfigError::Probability { index, value });
            }
        }
        Ok(BernoulliVector { p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn expectation(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// `prod (1 - p_i)`, summed in log space.
pub fn prob_exactly_zero(v: &BernoulliVector) -> f64 {
    libm::exp(v.p.iter().map(|&p| libm::log1p(-p)).sum::<f64>())
}

/// `sum_i p_i prod_{j != i} (1 - p_j)`, written as
/// `Pr[X = 0] * sum_i p_i / (1 - p_i)` (every `p_i <= 1/2`).
pub fn prob_exactly_one(v: &BernoulliVector) -> f64 {
    let odds: f64 = v.p.iter().map(|&p| p / (1.0 - p)).sum();
    prob_exactly_zero(v) * odds
}

/// Broadcast counts of a fresh c-backoff over its first `horizon` slots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackoffAttempts {
    /// Largest possible number of broadcasts.
    pub max: u64,
    /// Expected number of broadcasts (repeated picks of one slot count once).
    pub expected: f64,
}

/// Exact attempt counts for slots `1..=horizon` of a c-backoff started at 0.
///
/// Each epoch `(c^l, c^(l+1)]` contributes up to `c` broadcasts, or fewer
/// when only part of it (or a narrow range) lies inside the horizon.
pub fn expected_backoff_attempts(c: u64, horizon: u64) -> BackoffAttempts {
    let mut max = 0;
    let mut expected = 0.0;
    let mut epoch = 1;
    while let Some((lo, hi)) = epoch_bounds(c, epoch) {
        if lo >= horizon {
            break;
        }
        let covered = hi.min(horizon) - lo;
        max += covered.min(c);
        expected += covered as f64 * backoff_transmit_probability(c, hi);
        epoch += 1;
    }
    BackoffAttempts { max, expected }
}

//! Single-channel comparison protocols. A player of age `t` (the arrival
//! slot is age 1) broadcasts independently in every slot until it succeeds.

use rand::Rng;

use crate::rng::coin;

/// Exponential backoff in its mean-field form: `min(1, 2/t)`.
#[inline]
pub fn exp_backoff_probability(t: u64) -> f64 {
    let t = t.max(1) as f64;
    (2.0 / t).min(1.0)
}

pub fn exp_backoff_decide<R: Rng + ?Sized>(t: u64, rng: &mut R) -> bool {
    coin(exp_backoff_probability(t), rng)
}

/// Polynomial backoff: `min(1, t^-gamma)`.
#[inline]
pub fn poly_backoff_probability(t: u64, gamma: f64) -> f64 {
    let t = t.max(1) as f64;
    libm::pow(t, -gamma).min(1.0)
}

pub fn poly_backoff_decide<R: Rng + ?Sized>(t: u64, gamma: f64, rng: &mut R) -> bool {
    coin(poly_backoff_probability(t, gamma), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngPlan, StreamId};

    #[test]
    fn exp_values() {
        assert_eq!(exp_backoff_probability(1), 1.0);
        assert_eq!(exp_backoff_probability(2), 1.0);
        assert!((exp_backoff_probability(100) - 0.02).abs() < 1e-15);
        let mut r = RngPlan::new(1).stream(StreamId::Aux(0));
        assert!(exp_backoff_decide(1, &mut r));
        let n = 1_000_000;
        let hits = (0..n).filter(|_| exp_backoff_decide(100, &mut r)).count();
        assert!((hits as f64 / n as f64 - 0.02).abs() <= 0.0005);
    }

    /// Broadcasts over ages 1..=2^16 have mean `sum min(1, 2/t)`, which is
    /// `2 ln(2^16)` up to constants.
    #[test]
    fn exp_expected_broadcasts_is_logarithmic() {
        let n: u64 = 1 << 16;
        let oracle: f64 = (1..=n).map(exp_backoff_probability).sum();
        let ln = libm::log(n as f64);
        assert!(oracle >= 2.0 * ln - 3.0 && oracle <= 2.0 * ln + 5.0, "{oracle}");
        let mut r = RngPlan::new(2).stream(StreamId::Aux(0));
        let runs = 300;
        let total: usize = (0..runs)
            .map(|_| (1..=n).filter(|&t| exp_backoff_decide(t, &mut r)).count())
            .sum();
        let mean = total as f64 / runs as f64;
        assert!(mean >= 2.0 * ln - 3.0 && mean <= 2.0 * ln + 5.0, "{mean}");
    }

    #[test]
    fn poly_values() {
        assert_eq!(poly_backoff_probability(1, 0.5), 1.0);
        assert!((poly_backoff_probability(16, 0.5) - 0.25).abs() < 1e-15);
        for t in 1..1000 {
            // gamma = 1 is exponential backoff with numerator 1 instead of 2
            let p1 = poly_backoff_probability(t, 1.0);
            assert!((p1 - 1.0 / t as f64).abs() < 1e-15);
            if t >= 2 {
                assert!((exp_backoff_probability(t) - 2.0 * p1).abs() < 1e-15);
            }
        }
        let mut r = RngPlan::new(3).stream(StreamId::Aux(0));
        assert!(poly_backoff_decide(1, 0.5, &mut r));
    }
}

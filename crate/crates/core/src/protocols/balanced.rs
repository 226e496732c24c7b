//! Balanced-execution check for a protocol's contention trace.
//!
//! Given, for each step `s`, the number `m_s` of players running a protocol
//! and their common broadcast probability `q_s`, an execution is
//! `(d, tau)`-balanced when both sequences are nonincreasing, `m_s q_s <=
//! log(tau) / d` for `s > tau`, and `m_s q_s >= d log(tau) / tau` for
//! `s <= d^6 tau`. Logarithms are base 2.

/// Which of the four conditions hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BalanceReport {
    pub monotone_size: bool,
    pub monotone_prob: bool,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl BalanceReport {
    pub fn balanced(&self) -> bool {
        self.monotone_size && self.monotone_prob && self.lower_ok && self.upper_ok
    }
}

/// Checks a trace whose first entry is step 0.
pub fn check_balanced(trace: &[(u64, f64)], d: f64, tau: u64) -> BalanceReport {
    check_balanced_from(trace, 0, d, tau)
}

/// Checks a trace whose first entry is step `first_step`.
pub fn check_balanced_from(trace: &[(u64, f64)], first_step: u64, d: f64, tau: u64) -> BalanceReport {
    let log_tau = libm::log2(tau.max(1) as f64);
    let low_cap = log_tau / d;
    let high_floor = d * log_tau / tau.max(1) as f64;
    let upper_end = libm::pow(d, 6.0) * tau as f64;
    let mut report = BalanceReport {
        monotone_size: true,
        monotone_prob: true,
        lower_ok: true,
        upper_ok: true,
    };
    let mut prev: Option<(u64, f64)> = None;
    for (k, &(m, q)) in trace.iter().enumerate() {
        let s = first_step + k as u64;
        if let Some((pm, pq)) = prev {
            report.monotone_size &= m <= pm;
            report.monotone_prob &= q <= pq;
        }
        let contention = m as f64 * q;
        if s > tau {
            report.lower_ok &= contention <= low_cap;
        }
        if (s as f64) <= upper_end {
            report.upper_ok &= contention >= high_floor;
        }
        prev = Some((m, q));
    }
    report
}

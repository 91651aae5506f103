//! Node failure probabilities and item availability.
//!
//! A node with annual failure rate `afr` is modeled as a homogeneous Poisson
//! process with rate `λ = −ln(1 − afr)` per year, so the probability of at
//! least one failure within a horizon of `t` years is `1 − e^(−λt)`; at one
//! year this is exactly `afr`.
//!
//! An item mapped onto `N` nodes with `P` parity chunks survives when at most
//! `P` of those nodes fail. With independent failures the number of failures
//! follows a Poisson-binomial law, and availability is its CDF at `P`. The CDF
//! is computed exactly with a convolution over nodes truncated to `P + 1`
//! states, `O(N·P)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("failure rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("horizon must be positive, got {0} days")]
    InvalidHorizon(f64),
    #[error("failure probability set must be non-empty with entries in [0, 1)")]
    InvalidProbSet,
}

/// Probability that a node with annual failure rate `afr` fails at least once
/// within `delta_t_days`.
pub fn failure_prob(afr: f64, delta_t_days: f64) -> Result<f64, ReliabilityError> {
    if !(0.0..1.0).contains(&afr) {
        return Err(ReliabilityError::InvalidRate(afr));
    }
    if delta_t_days.is_nan() || delta_t_days <= 0.0 {
        return Err(ReliabilityError::InvalidHorizon(delta_t_days));
    }
    Ok(failure_prob_unchecked(afr, delta_t_days))
}

pub(crate) fn failure_prob_unchecked(afr: f64, delta_t_days: f64) -> f64 {
    // 1 - (1-afr)^t, written with ln_1p/expm1 so small rates keep full precision.
    let rate = -(-afr).ln_1p();
    -(-rate * delta_t_days / DAYS_PER_YEAR).exp_m1()
}

/// Per-day failure probability consistent with [`failure_prob`].
pub fn daily_failure_prob(afr: f64) -> f64 {
    failure_prob_unchecked(afr, 1.0)
}

/// Probabilities of exactly `0..=max_failures` failures among independent
/// trials. Entry `j` does not depend on `max_failures` as long as
/// `j <= max_failures`, bit for bit.
pub fn failure_count_pmf(probs: &[f64], max_failures: usize) -> Vec<f64> {
    let m = max_failures.min(probs.len());
    let mut dp = vec![0.0; m + 1];
    dp[0] = 1.0;
    for (i, &q) in probs.iter().enumerate() {
        let top = (i + 1).min(m);
        for j in (1..=top).rev() {
            dp[j] = dp[j] * (1.0 - q) + dp[j - 1] * q;
        }
        dp[0] *= 1.0 - q;
    }
    dp
}

/// `Pr(X ≤ p)` for the number `X` of failures among the given nodes.
pub fn availability(probs: &[f64], p: usize) -> f64 {
    if p >= probs.len() {
        return 1.0;
    }
    failure_count_pmf(probs, p).iter().sum()
}

/// Smallest parity count `p ≥ 1` whose availability reaches `target`, leaving
/// at least one data chunk. `None` when no such `p` exists.
pub fn min_parity_for_target(probs: &[f64], target: f64) -> Option<usize> {
    let n = probs.len();
    if n < 2 {
        return None;
    }
    let max_p = n - 1;
    // Grow the truncation geometrically; reliable mappings stop after one pass.
    let mut depth = 1usize;
    loop {
        let depth_now = depth.min(max_p);
        let pmf = failure_count_pmf(probs, depth_now);
        let mut cumulative = 0.0;
        for (j, mass) in pmf.iter().enumerate() {
            cumulative += mass;
            if j >= 1 && cumulative >= target {
                return Some(j);
            }
        }
        if depth_now == max_p {
            return None;
        }
        depth *= 2;
    }
}

/// Chooses `(k, p)` over a fixed mapping of `N = probs.len()` nodes so that
/// `ceil(size/k)·N` is minimal subject to the reliability target. With `N`
/// fixed this is the largest feasible `k`.
pub fn best_kp_for_mapping(probs: &[f64], _item_size: u64, target: f64) -> Option<(usize, usize)> {
    let n = probs.len();
    let p = min_parity_for_target(probs, target)?;
    Some((n - p, p))
}

/// Validated list of per-node failure probabilities over a common horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureProbSet {
    probs: Vec<f64>,
}

impl FailureProbSet {
    pub fn new(probs: Vec<f64>) -> Result<Self, ReliabilityError> {
        if probs.is_empty() || probs.iter().any(|q| !(0.0..1.0).contains(q)) {
            return Err(ReliabilityError::InvalidProbSet);
        }
        Ok(FailureProbSet { probs })
    }

    /// Failure probabilities of nodes with the given annual rates over `days`.
    pub fn from_afrs(afrs: &[f64], days: f64) -> Result<Self, ReliabilityError> {
        let probs = afrs
            .iter()
            .map(|&afr| failure_prob(afr, days))
            .collect::<Result<Vec<_>, _>>()?;
        FailureProbSet::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn availability(&self, p: usize) -> f64 {
        availability(&self.probs, p)
    }

    pub fn min_parity_for_target(&self, target: f64) -> Option<usize> {
        min_parity_for_target(&self.probs, target)
    }

    pub fn best_kp(&self, item_size: u64, target: f64) -> Option<(usize, usize)> {
        best_kp_for_mapping(&self.probs, item_size, target)
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Pr(X ≤ p) by summing over every failure subset.
    pub fn enumerate_availability(probs: &[f64], p: usize) -> f64 {
        let n = probs.len();
        let mut total = 0.0;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize > p {
                continue;
            }
            let mut prob = 1.0;
            for (i, &q) in probs.iter().enumerate() {
                prob *= if mask & (1 << i) != 0 { q } else { 1.0 - q };
            }
            total += prob;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::enumerate_availability;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn failure_prob_half_at_ln2_rate() {
        // λ = ln 2 corresponds to afr = 0.5.
        assert!((failure_prob(0.5, 365.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn failure_prob_zero_rate() {
        for days in [1.0, 30.0, 365.0, 3650.0] {
            assert_eq!(failure_prob(0.0, days).unwrap(), 0.0);
        }
    }

    #[test]
    fn failure_prob_half_year() {
        // 1 - 0.9^0.5, evaluated with 30-digit arithmetic.
        let expected = 0.051_316_701_949_486_2;
        assert!((failure_prob(0.10, 182.5).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn failure_prob_rejects_bad_rates() {
        assert_eq!(failure_prob(1.0, 10.0), Err(ReliabilityError::InvalidRate(1.0)));
        assert_eq!(failure_prob(-0.1, 10.0), Err(ReliabilityError::InvalidRate(-0.1)));
        assert!(failure_prob(0.1, 0.0).is_err());
    }

    #[test]
    fn availability_small_case() {
        let probs = [0.1, 0.2, 0.3];
        assert!((enumerate_availability(&probs, 1) - 0.902).abs() < 1e-12);
        assert!((availability(&probs, 1) - 0.902).abs() < 1e-12);
    }

    #[test]
    fn availability_full_parity_is_one() {
        assert_eq!(availability(&[0.3, 0.9, 0.5], 3), 1.0);
        assert_eq!(availability(&[0.3, 0.9, 0.5], 7), 1.0);
    }

    #[test]
    fn availability_reliable_nodes() {
        for p in 0..4 {
            assert_eq!(availability(&[0.0; 5], p), 1.0);
        }
    }

    #[test]
    fn min_parity_examples() {
        assert_eq!(min_parity_for_target(&[0.5, 0.5, 0.5], 0.874), Some(2));
        assert_eq!(min_parity_for_target(&[0.0; 6], 0.999_999), Some(1));
        assert_eq!(min_parity_for_target(&[0.9, 0.9], 0.999), None);
        assert_eq!(min_parity_for_target(&[0.1], 0.5), None);
    }

    #[test]
    fn min_parity_deep_search() {
        // Needs more than one doubling round.
        let probs = [0.5; 12];
        let p = min_parity_for_target(&probs, 0.99).unwrap();
        assert!(enumerate_availability(&probs, p) >= 0.99);
        assert!(enumerate_availability(&probs, p - 1) < 0.99);
    }

    #[test]
    fn best_kp_examples() {
        // Pr(X ≤ 1) over five 0.01 trials = 0.99901985.
        assert!((enumerate_availability(&[0.01; 5], 1) - 0.999_019_850_4).abs() < 1e-12);
        assert_eq!(best_kp_for_mapping(&[0.01; 5], 100, 0.9), Some((4, 1)));
        assert_eq!(best_kp_for_mapping(&[0.0; 5], 100, 0.999_999_9), Some((4, 1)));
        // Only p = N-1 reaches this target.
        let probs = [0.3; 4];
        let target = 0.99;
        assert!(enumerate_availability(&probs, 2) < target);
        assert!(enumerate_availability(&probs, 3) >= target);
        assert_eq!(best_kp_for_mapping(&probs, 100, target), Some((1, 3)));
    }

    #[test]
    fn best_kp_agrees_with_exhaustive_scan() {
        let probs = [0.05, 0.12, 0.02, 0.3, 0.07, 0.01];
        for target in [0.5, 0.9, 0.99, 0.999, 0.9999] {
            let n = probs.len();
            let brute = (1..n)
                .filter(|&k| enumerate_availability(&probs, n - k) >= target)
                .map(|k| (chunk_size_times(1000, k, n), std::cmp::Reverse(k)))
                .min()
                .map(|(_, std::cmp::Reverse(k))| (k, n - k));
            assert_eq!(best_kp_for_mapping(&probs, 1000, target), brute, "target {target}");
        }
    }

    fn chunk_size_times(size: u64, k: usize, n: usize) -> u64 {
        size.div_ceil(k as u64) * n as u64
    }

    #[test]
    fn prob_set_validation() {
        assert!(FailureProbSet::new(vec![]).is_err());
        assert!(FailureProbSet::new(vec![0.2, 1.0]).is_err());
        let set = FailureProbSet::from_afrs(&[0.1, 0.2], 365.0).unwrap();
        assert!((set.probs()[1] - 0.2).abs() < 1e-12);
    }

    fn probs_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..0.999, 1..=12)
    }

    proptest! {
        #[test]
        fn matches_enumeration(probs in probs_strategy(), p in 0usize..13) {
            let p = p.min(probs.len());
            let dp = availability(&probs, p);
            let brute = enumerate_availability(&probs, p);
            prop_assert!((dp - brute).abs() <= 1e-12, "dp {dp} brute {brute}");
        }

        #[test]
        fn monotone_in_parity(probs in probs_strategy()) {
            let mut last = 0.0;
            for p in 0..=probs.len() {
                let a = availability(&probs, p);
                prop_assert!(a + 1e-15 >= last);
                last = a;
            }
        }

        #[test]
        fn antitone_in_each_probability(probs in probs_strategy(), idx in 0usize..12, bump in 0.0f64..0.5, p in 0usize..12) {
            let idx = idx % probs.len();
            let p = p % probs.len();
            let mut worse = probs.clone();
            worse[idx] = (worse[idx] + bump).min(0.999);
            prop_assert!(availability(&worse, p) <= availability(&probs, p) + 1e-15);
        }

        #[test]
        fn min_parity_monotone_in_target(probs in prop::collection::vec(0.0f64..0.5, 2..=12), t1 in 0.01f64..0.999_999, t2 in 0.01f64..0.999_999) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if let (Some(a), Some(b)) = (min_parity_for_target(&probs, lo), min_parity_for_target(&probs, hi)) {
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn best_kp_satisfies_target(probs in prop::collection::vec(0.0f64..0.6, 2..=16), target in 0.01f64..0.999_999_9) {
            if let Some((k, p)) = best_kp_for_mapping(&probs, 1 << 20, target) {
                prop_assert_eq!(k + p, probs.len());
                prop_assert!(k >= 1 && p >= 1);
                prop_assert!(availability(&probs, p) >= target);
                if p > 1 {
                    prop_assert!(availability(&probs, p - 1) < target);
                }
            }
        }

        #[test]
        fn failure_prob_monotone(a1 in 0.0f64..0.99, a2 in 0.0f64..0.99, d1 in 1.0f64..2000.0, d2 in 1.0f64..2000.0) {
            let (alo, ahi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(failure_prob(alo, dlo).unwrap() <= failure_prob(ahi, dlo).unwrap());
            prop_assert!(failure_prob(alo, dlo).unwrap() <= failure_prob(alo, dhi).unwrap());
        }
    }
}

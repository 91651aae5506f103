use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub const RT_MIN: f64 = 0.90;
pub const RT_MAX: f64 = 0.9999999;

/// Percent availability at each sampler level `x ∈ {−1, …, 5}`.
fn level_percent(x: i32) -> f64 {
    match x {
        -1 => 90.0,
        5 => 99.99999,
        x => 100.0 - 10f64.powi(-x),
    }
}

/// Draws `x` uniformly from `{−1, …, 5}`; below 5 the target is uniform
/// between consecutive levels, at 5 it is exactly `0.9999999`.
pub fn sample_reliability_target<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let x: i32 = rng.random_range(-1..=5);
    if x == 5 {
        return RT_MAX;
    }
    let (lo, hi) = (level_percent(x), level_percent(x + 1));
    (lo + (hi - lo) * rng.random::<f64>()) / 100.0
}

/// How items get their reliability target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RtPolicy {
    /// Every item gets this target, whatever the trace says.
    Fixed(f64),
    /// Items without a target in the trace draw one from the sampler.
    Sampler,
}

impl fmt::Display for RtPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RtPolicy::Fixed(v) => write!(f, "{v}"),
            RtPolicy::Sampler => f.write_str("sampler"),
        }
    }
}

impl FromStr for RtPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("sampler") {
            return Ok(RtPolicy::Sampler);
        }
        let v: f64 = s.parse().map_err(|_| format!("reliability target {s:?} is neither a number nor \"sampler\""))?;
        if v > 0.0 && v < 1.0 {
            Ok(RtPolicy::Fixed(v))
        } else {
            Err(format!("reliability target {v} outside (0,1)"))
        }
    }
}

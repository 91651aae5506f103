/// Default span start before any item has been observed: 1 MB.
pub const DEFAULT_S_MIN: u64 = 1_000_000;
pub const DEFAULT_STEEPNESS: f64 = 8.0;

/// Normalized exponential storage-pressure score. Spans from empty to the
/// point where only the smallest known item still fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationCurve {
    pub s_min: u64,
    pub steepness: f64,
}

impl Default for SaturationCurve {
    fn default() -> Self {
        SaturationCurve {
            s_min: DEFAULT_S_MIN,
            steepness: DEFAULT_STEEPNESS,
        }
    }
}

impl SaturationCurve {
    pub fn new(s_min: u64, steepness: f64) -> Self {
        SaturationCurve { s_min, steepness }
    }

    /// In `[0, 1]`, non-decreasing in `used`.
    pub fn value(&self, used: u64, capacity: u64) -> f64 {
        let span = capacity.saturating_sub(self.s_min).max(1) as f64;
        let x = (used as f64 / span).clamp(0.0, 1.0);
        if self.steepness == 0.0 {
            return x;
        }
        (self.steepness * x).exp_m1() / self.steepness.exp_m1()
    }
}

pub fn saturation(curve: &SaturationCurve, used: u64, capacity: u64) -> f64 {
    curve.value(used, capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints() {
        let c = SaturationCurve::new(100, 8.0);
        assert_eq!(c.value(0, 1100), 0.0);
        assert_eq!(c.value(1000, 1100), 1.0);
        assert_eq!(c.value(1100, 1100), 1.0);
    }

    #[test]
    fn midpoint_value() {
        // (e^4 - 1)/(e^8 - 1), evaluated to 20 digits with mpmath.
        let c = SaturationCurve::new(100, 8.0);
        let v = c.value(500, 1100);
        assert!((v - 0.017_986_209_962_091_56).abs() < 1e-15, "{v}");
    }

    #[test]
    fn degenerate_span() {
        let c = SaturationCurve::new(5000, 8.0);
        assert_eq!(c.value(0, 100), 0.0);
        assert_eq!(c.value(1, 100), 1.0);
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(s_min in 0u64..1_000, cap in 1u64..1_000_000, a in 0u64..1_000_000, b in 0u64..1_000_000, k in 0.5f64..20.0) {
            let c = SaturationCurve::new(s_min, k);
            let (lo, hi) = (a.min(b).min(cap), a.max(b).min(cap));
            let (vl, vh) = (c.value(lo, cap), c.value(hi, cap));
            prop_assert!((0.0..=1.0).contains(&vl) && (0.0..=1.0).contains(&vh));
            prop_assert!(vl <= vh);
        }
    }
}

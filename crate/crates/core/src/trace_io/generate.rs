use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use super::trace::{TraceRecord, WorkloadTrace};
use super::{TraceIoError, BYTES_PER_MB};

#[derive(Debug, Clone, PartialEq)]
pub enum SizeModel {
    /// Lognormal matched to the given mean and standard deviation, clamped
    /// to `[min_bytes, max_bytes]`.
    LogNormal {
        mean_bytes: f64,
        std_bytes: f64,
        min_bytes: u64,
        max_bytes: u64,
    },
    /// Uniform resampling of observed sizes.
    Empirical { sizes: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalModel {
    /// Poisson process whose expected span covers `span_days`.
    Poisson { span_days: f64 },
    Fixed { interval_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub count: usize,
    pub size: SizeModel,
    pub arrival: ArrivalModel,
    pub seed: u64,
    pub start_epoch_s: f64,
    /// Replace the smallest and largest draws with the model bounds.
    pub pin_extremes: bool,
    /// Written into every row; `None` leaves the column blank.
    pub retention_days: Option<f64>,
    pub reliability_target: Option<f64>,
}

impl TraceSpec {
    /// Video-analytics workload shape: 4157 items, mean 117.1 MB, standard
    /// deviation 68.1 MB, sizes 1.4 to 856.1 MB, over 70 days.
    pub fn meva(seed: u64) -> Self {
        TraceSpec {
            count: 4157,
            size: SizeModel::LogNormal {
                mean_bytes: 117.1 * BYTES_PER_MB,
                std_bytes: 68.1 * BYTES_PER_MB,
                min_bytes: (1.4 * BYTES_PER_MB) as u64,
                max_bytes: (856.1 * BYTES_PER_MB) as u64,
            },
            arrival: ArrivalModel::Poisson { span_days: 70.0 },
            seed,
            start_epoch_s: 1_600_000_000.0,
            pin_extremes: true,
            retention_days: None,
            reliability_target: None,
        }
    }

    fn validate(&self) -> Result<(), TraceIoError> {
        let bad = |m: &str| Err(TraceIoError::SpecInvalid(m.into()));
        match &self.size {
            SizeModel::LogNormal {
                mean_bytes,
                std_bytes,
                min_bytes,
                max_bytes,
            } => {
                if !(*mean_bytes >= 1.0 && mean_bytes.is_finite()) || !(*std_bytes >= 0.0 && std_bytes.is_finite()) {
                    return bad("lognormal mean must be ≥ 1 byte and std ≥ 0");
                }
                if *min_bytes == 0 || min_bytes > max_bytes {
                    return bad("size bounds need 1 ≤ min ≤ max");
                }
            }
            SizeModel::Empirical { sizes } => {
                if sizes.is_empty() || sizes.contains(&0) {
                    return bad("empirical sizes must be non-empty and positive");
                }
            }
        }
        match self.arrival {
            ArrivalModel::Poisson { span_days } if !(span_days > 0.0 && span_days.is_finite()) => {
                return bad("arrival span must be positive");
            }
            ArrivalModel::Fixed { interval_s } if !(interval_s >= 0.0 && interval_s.is_finite()) => {
                return bad("arrival interval must be non-negative");
            }
            _ => {}
        }
        if self.retention_days.is_some_and(|d| d.is_nan() || d <= 0.0) {
            return bad("retention must be positive");
        }
        if self.reliability_target.is_some_and(|v| !(v > 0.0 && v < 1.0)) {
            return bad("reliability target must lie in (0,1)");
        }
        Ok(())
    }
}

/// Deterministic in `spec` (including its seed). Ids are `0..count`.
pub fn gen_trace(spec: &TraceSpec) -> Result<WorkloadTrace, TraceIoError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sizes: Vec<u64> = match &spec.size {
        SizeModel::LogNormal {
            mean_bytes,
            std_bytes,
            min_bytes,
            max_bytes,
        } => {
            let sigma2 = (1.0 + (std_bytes / mean_bytes).powi(2)).ln();
            let mu = mean_bytes.ln() - sigma2 / 2.0;
            let dist = LogNormal::new(mu, sigma2.sqrt()).map_err(|e| TraceIoError::SpecInvalid(e.to_string()))?;
            (0..spec.count)
                .map(|_| (dist.sample(&mut rng).round() as u64).clamp(*min_bytes, *max_bytes))
                .collect()
        }
        SizeModel::Empirical { sizes } => (0..spec.count).map(|_| sizes[rng.random_range(0..sizes.len())]).collect(),
    };
    if spec.pin_extremes && sizes.len() >= 2 {
        if let SizeModel::LogNormal { min_bytes, max_bytes, .. } = spec.size {
            let lo = (0..sizes.len()).min_by_key(|&i| (sizes[i], i)).expect("non-empty");
            let hi = (0..sizes.len()).rev().max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))).expect("non-empty");
            sizes[lo] = min_bytes;
            if hi != lo {
                sizes[hi] = max_bytes;
            }
        }
    }

    let mut t = spec.start_epoch_s;
    let poisson = match spec.arrival {
        ArrivalModel::Poisson { span_days } if spec.count > 0 => {
            let rate = spec.count as f64 / (span_days * 86_400.0);
            Some(Exp::new(rate).map_err(|e| TraceIoError::SpecInvalid(e.to_string()))?)
        }
        _ => None,
    };
    let records = sizes
        .into_iter()
        .enumerate()
        .map(|(i, size)| {
            if i > 0 {
                t += match (&poisson, &spec.arrival) {
                    (Some(exp), _) => exp.sample(&mut rng),
                    (None, ArrivalModel::Fixed { interval_s }) => *interval_s,
                    (None, _) => 0.0,
                };
            }
            TraceRecord {
                item_id: i as u64,
                size_bytes: size,
                submit_epoch_s: t.round(),
                retention_days: spec.retention_days,
                reliability_target: spec.reliability_target,
            }
        })
        .collect();
    Ok(WorkloadTrace::new(records))
}

/// Appends copies of the trace, each shifted past the previous copy's last
/// timestamp and given fresh ids, until the total reaches `target_bytes`.
pub fn repeat_to(trace: &WorkloadTrace, target_bytes: u64) -> Result<WorkloadTrace, TraceIoError> {
    let total = trace.total_bytes();
    if total >= target_bytes {
        return Ok(trace.clone());
    }
    if total == 0 {
        return Err(TraceIoError::SpecInvalid("cannot repeat an empty trace".into()));
    }
    let first = trace.records.first().expect("non-empty").submit_epoch_s;
    let last = trace.records.last().expect("non-empty").submit_epoch_s;
    // Copies start one mean inter-arrival gap after the previous copy.
    let gap = if trace.len() > 1 { (last - first) / (trace.len() - 1) as f64 } else { 1.0 };
    let period = last - first + gap;
    let mut next_id = trace.records.iter().map(|r| r.item_id).max().expect("non-empty") + 1;
    let mut out = trace.records.clone();
    let mut acc = total;
    let mut copy = 1u32;
    while acc < target_bytes {
        for r in &trace.records {
            let mut r = r.clone();
            r.item_id = next_id;
            next_id += 1;
            r.submit_epoch_s += period * copy as f64;
            acc += r.size_bytes;
            out.push(r);
        }
        copy += 1;
    }
    Ok(WorkloadTrace::new(out))
}

/// Longest prefix whose total size stays within `target_bytes`.
pub fn trim_to(trace: &WorkloadTrace, target_bytes: u64) -> WorkloadTrace {
    let mut acc = 0u64;
    let records = trace
        .records
        .iter()
        .take_while(|r| {
            acc += r.size_bytes;
            acc <= target_bytes
        })
        .cloned()
        .collect();
    WorkloadTrace { records }
}

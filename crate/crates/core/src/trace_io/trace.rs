use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::DataItem;

use super::rt::{sample_reliability_target, RtPolicy};
use super::{line_of, open, parse_f64, TraceIoError};

pub const TRACE_HEADER: [&str; 5] = ["item_id", "size_bytes", "submit_epoch_s", "retention_days", "reliability_target"];
pub const DEFAULT_RETENTION_DAYS: f64 = 365.0;
const RT_STREAM: u64 = 2;

/// One trace row. Blank optional columns are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub item_id: u64,
    pub size_bytes: u64,
    pub submit_epoch_s: f64,
    pub retention_days: Option<f64>,
    pub reliability_target: Option<f64>,
}

/// Records in submission order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub records: Vec<TraceRecord>,
}

impl WorkloadTrace {
    /// Stable-sorts by submission time.
    pub fn new(mut records: Vec<TraceRecord>) -> Self {
        records.sort_by(|a, b| a.submit_epoch_s.total_cmp(&b.submit_epoch_s));
        WorkloadTrace { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.size_bytes).sum()
    }

    /// Resolves every row into a [`DataItem`]. Sampled targets are drawn in
    /// record order from a stream seeded by `seed`.
    pub fn items(&self, policy: RtPolicy, seed: u64, default_retention_days: f64) -> Vec<DataItem> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(RT_STREAM);
        self.records
            .iter()
            .map(|r| {
                let reliability_target = match (policy, r.reliability_target) {
                    (RtPolicy::Fixed(v), _) => v,
                    (RtPolicy::Sampler, Some(v)) => v,
                    (RtPolicy::Sampler, None) => sample_reliability_target(&mut rng),
                };
                DataItem {
                    id: crate::model::ItemId(r.item_id),
                    size: r.size_bytes,
                    submit_time: r.submit_epoch_s,
                    retention_days: r.retention_days.unwrap_or(default_retention_days),
                    reliability_target,
                }
            })
            .collect()
    }
}

fn optional(field: &str, what: &str) -> Result<Option<f64>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, what).map(Some)
    }
}

pub fn read_trace<R: Read>(reader: R) -> Result<WorkloadTrace, TraceIoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let err = |line: u64, reason: String| TraceIoError::TraceFormat { line, reason };
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(err(1, format!("header must be {}", TRACE_HEADER.join(","))));
    }
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| err(line_of(e.position()), e.to_string()))?;
        let line = line_of(record.position());
        if record.len() != TRACE_HEADER.len() {
            return Err(err(line, format!("expected {} fields, found {}", TRACE_HEADER.len(), record.len())));
        }
        let parse = || -> Result<TraceRecord, String> {
            let item_id: u64 = record[0].parse().map_err(|_| format!("item_id {:?} is not an integer", &record[0]))?;
            let size_bytes: u64 = record[1].parse().map_err(|_| format!("size_bytes {:?} is not an integer", &record[1]))?;
            if size_bytes == 0 {
                return Err("size_bytes must be positive".into());
            }
            let submit_epoch_s = parse_f64(&record[2], "submit_epoch_s")?;
            let retention_days = optional(&record[3], "retention_days")?;
            if retention_days.is_some_and(|d| d <= 0.0) {
                return Err("retention_days must be positive".into());
            }
            let reliability_target = optional(&record[4], "reliability_target")?;
            if reliability_target.is_some_and(|v| !(v > 0.0 && v < 1.0)) {
                return Err("reliability_target must lie in (0,1)".into());
            }
            Ok(TraceRecord {
                item_id,
                size_bytes,
                submit_epoch_s,
                retention_days,
                reliability_target,
            })
        };
        let rec = parse().map_err(|r| err(line, r))?;
        if !ids.insert(rec.item_id) {
            return Err(err(line, format!("duplicate item_id {}", rec.item_id)));
        }
        records.push(rec);
    }
    Ok(WorkloadTrace::new(records))
}

pub fn load_trace(path: &Path) -> Result<WorkloadTrace, TraceIoError> {
    read_trace(open(path)?)
}

pub fn write_trace<W: Write>(writer: W, trace: &WorkloadTrace) -> Result<(), TraceIoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in &trace.records {
        w.write_record([
            r.item_id.to_string(),
            r.size_bytes.to_string(),
            r.submit_epoch_s.to_string(),
            opt(r.retention_days),
            opt(r.reliability_target),
        ])?;
    }
    w.flush().map_err(|source| TraceIoError::Io {
        path: "<trace>".into(),
        source,
    })?;
    Ok(())
}

//! File formats: node catalogs and workload traces as CSV, plus synthetic
//! trace generation and reliability-target assignment.
//!
//! Catalog units are TB and MB/s (powers of ten); everything inside the
//! crate is bytes and bytes per second.

mod catalog;
mod generate;
mod rt;
mod trace;

pub use catalog::{load_catalog, read_catalog, write_catalog, CATALOG_HEADER};
pub use generate::{gen_trace, repeat_to, trim_to, ArrivalModel, SizeModel, TraceSpec};
pub use rt::{sample_reliability_target, RtPolicy, RT_MAX, RT_MIN};
pub use trace::{load_trace, read_trace, write_trace, TraceRecord, WorkloadTrace, DEFAULT_RETENTION_DAYS, TRACE_HEADER};

pub const BYTES_PER_TB: f64 = 1e12;
pub const BYTES_PER_MB: f64 = 1e6;

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("catalog line {line}: {reason}")]
    CatalogFormat { line: u64, reason: String },
    #[error("trace line {line}: {reason}")]
    TraceFormat { line: u64, reason: String },
    #[error("invalid trace spec: {0}")]
    SpecInvalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Line of a csv record, or 1 when the reader has no position.
fn line_of(pos: Option<&csv::Position>) -> u64 {
    pos.map_or(1, csv::Position::line)
}

fn parse_f64(field: &str, what: &str) -> Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("{what} {field:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} {field:?} is not finite"))
    }
}

fn open(path: &std::path::Path) -> Result<std::fs::File, TraceIoError> {
    std::fs::File::open(path).map_err(|source| TraceIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

//! Encode/decode time prediction and parallel transfer times.
//!
//! Encode and decode durations are fitted by ordinary least squares over the
//! features `[1, item_size, n, k]`. Decode has no dependence on the parity
//! count, so its `n` feature is pinned to `k` and its `n` coefficient is zero.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StorageNode;

/// Committed calibration table, produced by `drex calibrate` on a reference
/// machine. Used when no calibration file is supplied.
pub const DEFAULT_CALIBRATION_CSV: &str = include_str!("../../../data/calibration.csv");

pub const CALIBRATION_HEADER: [&str; 5] = ["size_bytes", "n", "k", "encode_s", "decode_s"];

#[derive(Debug, Error)]
pub enum PerfModelError {
    #[error("design matrix is rank deficient ({samples} samples)")]
    RankDeficient { samples: usize },
    #[error("transfer over an empty mapping")]
    EmptyMapping,
    #[error("invalid calibration sample on line {line}: {reason}")]
    InvalidSample { line: usize, reason: String },
    #[error("calibration csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    #[serde(rename = "size_bytes")]
    pub item_size: u64,
    pub n: usize,
    pub k: usize,
    #[serde(rename = "encode_s")]
    pub encode_time: f64,
    #[serde(rename = "decode_s")]
    pub decode_time: f64,
}

impl CalibrationSample {
    fn validate(&self) -> Result<(), String> {
        if self.item_size == 0 || self.k == 0 || self.n == 0 {
            return Err("size, n and k must be positive".into());
        }
        if self.k >= self.n {
            return Err(format!("k={} must be below n={}", self.k, self.n));
        }
        if !(self.encode_time > 0.0 && self.decode_time > 0.0) {
            return Err("timings must be positive".into());
        }
        Ok(())
    }
}

pub fn read_calibration<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, PerfModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.deserialize::<CalibrationSample>() {
        let sample = record?;
        sample.validate().map_err(|reason| PerfModelError::InvalidSample {
            line: out.len() + 2,
            reason,
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn load_calibration(path: &Path) -> Result<Vec<CalibrationSample>, PerfModelError> {
    read_calibration(std::fs::File::open(path)?)
}

pub fn write_calibration<W: Write>(writer: W, samples: &[CalibrationSample]) -> Result<(), PerfModelError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    for s in samples {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Fitted encode/decode regressions. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub encode_coeffs: [f64; 4],
    pub decode_coeffs: [f64; 4],
}

impl TimeModel {
    /// A model predicting zero for everything (pure replication semantics).
    pub fn zero() -> Self {
        TimeModel {
            encode_coeffs: [0.0; 4],
            decode_coeffs: [0.0; 4],
        }
    }

    pub fn fit(samples: &[CalibrationSample]) -> Result<Self, PerfModelError> {
        let rank_err = || PerfModelError::RankDeficient { samples: samples.len() };
        if samples.len() < 4 {
            return Err(rank_err());
        }
        let enc_rows: Vec<[f64; 4]> = samples
            .iter()
            .map(|s| [1.0, s.item_size as f64, s.n as f64, s.k as f64])
            .collect();
        let enc_y: Vec<f64> = samples.iter().map(|s| s.encode_time).collect();
        let encode_coeffs = least_squares(&enc_rows, &enc_y).ok_or_else(rank_err)?;

        let dec_rows: Vec<[f64; 3]> = samples.iter().map(|s| [1.0, s.item_size as f64, s.k as f64]).collect();
        let dec_y: Vec<f64> = samples.iter().map(|s| s.decode_time).collect();
        let d = least_squares(&dec_rows, &dec_y).ok_or_else(rank_err)?;
        Ok(TimeModel {
            encode_coeffs,
            decode_coeffs: [d[0], d[1], 0.0, d[2]],
        })
    }

    /// The model fitted on the committed calibration table.
    pub fn default_calibrated() -> Self {
        let samples = read_calibration(DEFAULT_CALIBRATION_CSV.as_bytes()).expect("committed calibration table parses");
        TimeModel::fit(&samples).expect("committed calibration table is full rank")
    }

    pub fn predict_encode(&self, item_size: u64, n: usize, k: usize) -> f64 {
        dot(&self.encode_coeffs, [1.0, item_size as f64, n as f64, k as f64]).max(0.0)
    }

    pub fn predict_decode(&self, item_size: u64, k: usize) -> f64 {
        dot(&self.decode_coeffs, [1.0, item_size as f64, k as f64, k as f64]).max(0.0)
    }
}

fn dot(coeffs: &[f64; 4], features: [f64; 4]) -> f64 {
    coeffs.iter().zip(features).map(|(c, f)| c * f).sum()
}

/// OLS through SVD on a column-scaled design. `None` if rank deficient.
fn least_squares<const F: usize>(rows: &[[f64; F]], y: &[f64]) -> Option<[f64; F]> {
    let m = rows.len();
    let mut scale = [0.0f64; F];
    for row in rows {
        for (s, v) in scale.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    if scale.contains(&0.0) {
        return None;
    }
    let design = DMatrix::from_fn(m, F, |i, j| rows[i][j] / scale[j]);
    let target = DVector::from_column_slice(y);
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-10 * (m.max(F) as f64);
    if svd.rank(tol) < F {
        return None;
    }
    let solved = svd.solve(&target, tol).ok()?;
    let mut out = [0.0; F];
    for j in 0..F {
        out[j] = solved[j] / scale[j];
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Read,
    Write,
}

/// Time to move one chunk to (or from) every node in parallel: the slowest
/// node in the mapping bounds the transfer.
pub fn transfer_time<'a, I>(chunk_size: u64, nodes: I, direction: Direction) -> Result<f64, PerfModelError>
where
    I: IntoIterator<Item = &'a StorageNode>,
{
    let slowest = nodes
        .into_iter()
        .map(|n| match direction {
            Direction::Read => n.read_bw,
            Direction::Write => n.write_bw,
        })
        .fold(None, |acc: Option<f64>, bw| Some(acc.map_or(bw, |a| a.min(bw))))
        .ok_or(PerfModelError::EmptyMapping)?;
    Ok(chunk_size as f64 / slowest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB: u64 = 1_000_000;

    fn linear_samples() -> Vec<CalibrationSample> {
        let mut out = Vec::new();
        for size in [MB, 8 * MB, 64 * MB, 200 * MB] {
            for (n, k) in [(3, 2), (5, 3), (6, 4), (9, 6), (12, 10)] {
                let s = size as f64;
                out.push(CalibrationSample {
                    item_size: size,
                    n,
                    k,
                    encode_time: 0.01 + 2e-9 * s + 0.003 * n as f64 + 0.001 * k as f64,
                    decode_time: 0.02 + 3e-9 * s + 0.004 * k as f64,
                });
            }
        }
        out
    }

    #[test]
    fn fit_recovers_linear_data() {
        let samples = linear_samples();
        let model = TimeModel::fit(&samples).unwrap();
        for s in &samples {
            let e = model.predict_encode(s.item_size, s.n, s.k);
            let d = model.predict_decode(s.item_size, s.k);
            assert!(((e - s.encode_time) / s.encode_time).abs() < 1e-9);
            assert!(((d - s.decode_time) / s.decode_time).abs() < 1e-9);
        }
        assert!((model.encode_coeffs[1] - 2e-9).abs() < 1e-15);
        assert_eq!(model.decode_coeffs[2], 0.0);
    }

    #[test]
    fn three_samples_is_rank_deficient() {
        let samples = &linear_samples()[..3];
        assert!(matches!(TimeModel::fit(samples), Err(PerfModelError::RankDeficient { .. })));
    }

    #[test]
    fn collinear_samples_are_rank_deficient() {
        let mut samples = linear_samples();
        for s in &mut samples {
            s.n = 6;
            s.k = 4;
        }
        assert!(matches!(TimeModel::fit(&samples), Err(PerfModelError::RankDeficient { .. })));
    }

    #[test]
    fn zero_model_predicts_zero() {
        let model = TimeModel::zero();
        assert_eq!(model.predict_encode(123 * MB, 9, 6), 0.0);
        assert_eq!(model.predict_decode(123 * MB, 6), 0.0);
    }

    #[test]
    fn negative_predictions_clamp() {
        let model = TimeModel {
            encode_coeffs: [-1.0, 0.0, 0.0, 0.0],
            decode_coeffs: [-1.0, 0.0, 0.0, 0.0],
        };
        assert_eq!(model.predict_encode(MB, 3, 2), 0.0);
        assert_eq!(model.predict_decode(MB, 2), 0.0);
    }

    #[test]
    fn committed_calibration_fits() {
        let model = TimeModel::default_calibrated();
        assert!(model.encode_coeffs[1] >= 0.0);
        assert!(model.decode_coeffs[1] >= 0.0);
        assert!(model.predict_encode(500 * MB, 6, 4) > model.predict_encode(10 * MB, 6, 4));
    }

    #[test]
    fn calibration_csv_round_trip() {
        let samples = linear_samples();
        let mut buf = Vec::new();
        write_calibration(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("size_bytes,n,k,encode_s,decode_s\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_calibration(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn calibration_rejects_bad_rows() {
        let bad = "size_bytes,n,k,encode_s,decode_s\n100,3,3,0.1,0.1\n";
        assert!(matches!(read_calibration(bad.as_bytes()), Err(PerfModelError::InvalidSample { line: 2, .. })));
    }

    fn node(id: usize, w: f64, r: f64) -> StorageNode {
        StorageNode::new(id, "n", 1 << 40, w, r, 0.01).unwrap()
    }

    #[test]
    fn transfer_uses_slowest_node() {
        let nodes = [node(0, 100.0 * MB as f64, 1.0), node(1, 250.0 * MB as f64, 1.0)];
        let t = transfer_time(100 * MB, &nodes, Direction::Write).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        let single = transfer_time(50, &nodes[1..], Direction::Read).unwrap();
        assert_eq!(single, 50.0);
    }

    #[test]
    fn transfer_on_empty_mapping_fails() {
        let none: [StorageNode; 0] = [];
        assert!(matches!(transfer_time(1, &none, Direction::Read), Err(PerfModelError::EmptyMapping)));
    }

    #[test]
    fn doubling_k_halves_transfer() {
        let nodes = [node(0, 120.0, 80.0), node(1, 200.0, 300.0)];
        let size = 1_200_000u64;
        let t2 = transfer_time(crate::model::chunk_size(size, 2), &nodes, Direction::Write).unwrap();
        let t4 = transfer_time(crate::model::chunk_size(size, 4), &nodes, Direction::Write).unwrap();
        assert!((t2 / t4 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_is_permutation_invariant_and_monotone() {
        let nodes = vec![node(0, 150.0, 90.0), node(1, 110.0, 300.0), node(2, 230.0, 120.0)];
        let mut rev = nodes.clone();
        rev.reverse();
        for dir in [Direction::Read, Direction::Write] {
            assert_eq!(transfer_time(999, &nodes, dir).unwrap(), transfer_time(999, &rev, dir).unwrap());
        }
        let mut slower = nodes.clone();
        slower.push(node(3, 50.0, 50.0));
        assert!(transfer_time(999, &slower, Direction::Write).unwrap() > transfer_time(999, &nodes, Direction::Write).unwrap());
        let mut faster = nodes.clone();
        faster.push(node(3, 500.0, 500.0));
        assert_eq!(
            transfer_time(999, &faster, Direction::Write).unwrap(),
            transfer_time(999, &nodes, Direction::Write).unwrap()
        );
    }
}

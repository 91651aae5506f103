//! Systematic Reed-Solomon erasure code over GF(2^8).
//!
//! The payload is framed as an 8-byte little-endian length followed by the
//! bytes and zero padding, then split into `k` data shards. Parity rows come
//! from a Vandermonde matrix reduced to systematic form; the parity block is
//! rescaled so its first row and first column are all ones, which keeps every
//! square submatrix nonsingular and makes the first parity shard a plain XOR.
//!
//! Degraded reads rebuild the whole data stripe as the inverse of the
//! surviving rows applied to the surviving shards, so their cost grows with
//! `k · shard_size`.

pub mod gf;

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::perfmodel::CalibrationSample;
use gf::Matrix;

const LEN_PREFIX: usize = 8;
const SHARD_ALIGN: usize = 64;
pub const MAX_SHARDS: usize = 255;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid codec config: {0}")]
    ConfigInvalid(String),
    #[error("need {need} distinct shards, have {have}")]
    InsufficientShards { have: usize, need: usize },
    #[error("shard {index} has {got} bytes, expected {expected}")]
    ShardSizeMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("shard index {index} out of range for {n} shards")]
    ShardIndexOutOfRange { index: usize, n: usize },
    #[error("length header {declared} exceeds stripe capacity {capacity}")]
    CorruptHeader { declared: u64, capacity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    pub k: usize,
    pub p: usize,
    pub shard_size: usize,
}

impl CodecConfig {
    pub fn new(k: usize, p: usize, shard_size: usize) -> Result<Self, CodecError> {
        let cfg = CodecConfig { k, p, shard_size };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Smallest 64-byte aligned shard size holding the framed payload.
    pub fn for_payload(k: usize, p: usize, payload_len: usize) -> Result<Self, CodecError> {
        if k == 0 {
            return Err(CodecError::ConfigInvalid("k must be at least 1".into()));
        }
        let raw = (payload_len + LEN_PREFIX).div_ceil(k);
        let shard_size = raw.div_ceil(SHARD_ALIGN).max(1) * SHARD_ALIGN;
        Self::new(k, p, shard_size)
    }

    pub fn n(&self) -> usize {
        self.k + self.p
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.k == 0 {
            return Err(CodecError::ConfigInvalid("k must be at least 1".into()));
        }
        if self.p == 0 {
            return Err(CodecError::ConfigInvalid("p must be at least 1".into()));
        }
        if self.k + self.p > MAX_SHARDS {
            return Err(CodecError::ConfigInvalid(format!(
                "k + p = {} exceeds {MAX_SHARDS}",
                self.k + self.p
            )));
        }
        if self.shard_size == 0 {
            return Err(CodecError::ConfigInvalid("shard_size must be positive".into()));
        }
        Ok(())
    }

    fn stripe_capacity(&self) -> usize {
        self.k * self.shard_size
    }
}

/// Encoder/decoder for a fixed `(k, p)`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ReedSolomon {
    k: usize,
    p: usize,
    /// `(k+p) × k`; the top `k` rows are the identity.
    generator: Matrix,
}

impl ReedSolomon {
    pub fn new(k: usize, p: usize) -> Result<Self, CodecError> {
        CodecConfig::new(k, p, 1)?;
        let n = k + p;
        let v = Matrix::vandermonde(n, k);
        let top: Vec<usize> = (0..k).collect();
        let top_inv = v
            .select_rows(&top)
            .invert()
            .expect("Vandermonde rows with distinct points are independent");
        let systematic = v.mul(&top_inv);
        let parity_rows: Vec<usize> = (k..n).collect();
        let mut parity = systematic.select_rows(&parity_rows);
        for c in 0..k {
            parity.scale_col(c, gf::inv(parity.get(0, c)));
        }
        for r in 1..p {
            parity.scale_row(r, gf::inv(parity.get(r, 0)));
        }
        let mut generator = Matrix::zeros(n, k);
        for r in 0..n {
            for c in 0..k {
                let v = if r < k {
                    u8::from(r == c)
                } else {
                    parity.get(r - k, c)
                };
                generator.set(r, c, v);
            }
        }
        Ok(ReedSolomon { k, p, generator })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    pub fn encode(&self, config: &CodecConfig, payload: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
        self.check_config(config)?;
        if payload.is_empty() {
            return Err(CodecError::ConfigInvalid("payload must be non-empty".into()));
        }
        if payload.len() + LEN_PREFIX > config.stripe_capacity() {
            return Err(CodecError::ConfigInvalid(format!(
                "payload of {} bytes does not fit {} shards of {} bytes",
                payload.len(),
                config.k,
                config.shard_size
            )));
        }
        let mut stripe = vec![0u8; config.stripe_capacity()];
        stripe[..LEN_PREFIX].copy_from_slice(&(payload.len() as u64).to_le_bytes());
        stripe[LEN_PREFIX..LEN_PREFIX + payload.len()].copy_from_slice(payload);

        let mut shards: Vec<Vec<u8>> = stripe
            .chunks_exact(config.shard_size)
            .map(<[u8]>::to_vec)
            .collect();
        let data: Vec<&[u8]> = stripe.chunks_exact(config.shard_size).collect();
        for r in self.k..self.k + self.p {
            let mut out = vec![0u8; config.shard_size];
            gf::dot_product(&mut out, self.generator.row(r), &data);
            shards.push(out);
        }
        Ok(shards)
    }

    /// Reconstructs the payload from any `k` distinct shards. Extra shards
    /// beyond the first `k` distinct indices are ignored.
    pub fn decode(&self, config: &CodecConfig, shards: &[(usize, &[u8])]) -> Result<Vec<u8>, CodecError> {
        self.check_config(config)?;
        let n = self.k + self.p;
        let mut chosen: Vec<(usize, &[u8])> = Vec::with_capacity(self.k);
        let mut seen = vec![false; n];
        for &(index, bytes) in shards {
            if index >= n {
                return Err(CodecError::ShardIndexOutOfRange { index, n });
            }
            if bytes.len() != config.shard_size {
                return Err(CodecError::ShardSizeMismatch {
                    index,
                    expected: config.shard_size,
                    got: bytes.len(),
                });
            }
            if !seen[index] {
                seen[index] = true;
                if chosen.len() < self.k {
                    chosen.push((index, bytes));
                }
            }
        }
        if chosen.len() < self.k {
            return Err(CodecError::InsufficientShards {
                have: chosen.len(),
                need: self.k,
            });
        }

        let mut stripe = vec![0u8; config.stripe_capacity()];
        if (0..self.k).all(|i| seen[i]) {
            for &(index, bytes) in shards {
                if index < self.k {
                    stripe[index * config.shard_size..(index + 1) * config.shard_size].copy_from_slice(bytes);
                }
            }
        } else {
            let rows: Vec<usize> = chosen.iter().map(|&(i, _)| i).collect();
            let inverse = self
                .generator
                .select_rows(&rows)
                .invert()
                .expect("any k rows of an MDS generator are independent");
            let srcs: Vec<&[u8]> = chosen.iter().map(|&(_, b)| b).collect();
            for (r, out) in stripe.chunks_exact_mut(config.shard_size).enumerate() {
                gf::dot_product(out, inverse.row(r), &srcs);
            }
        }
        unframe(stripe)
    }

    fn check_config(&self, config: &CodecConfig) -> Result<(), CodecError> {
        config.validate()?;
        if config.k != self.k || config.p != self.p {
            return Err(CodecError::ConfigInvalid(format!(
                "config ({}, {}) does not match codec ({}, {})",
                config.k, config.p, self.k, self.p
            )));
        }
        Ok(())
    }
}

fn unframe(mut stripe: Vec<u8>) -> Result<Vec<u8>, CodecError> {
    let declared = u64::from_le_bytes(stripe[..LEN_PREFIX].try_into().expect("8-byte prefix"));
    let capacity = stripe.len() - LEN_PREFIX;
    if declared > capacity as u64 {
        return Err(CodecError::CorruptHeader { declared, capacity });
    }
    stripe.truncate(LEN_PREFIX + declared as usize);
    stripe.drain(..LEN_PREFIX);
    Ok(stripe)
}

pub fn encode(config: &CodecConfig, payload: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    ReedSolomon::new(config.k, config.p)?.encode(config, payload)
}

pub fn decode(config: &CodecConfig, shards: &[(usize, &[u8])]) -> Result<Vec<u8>, CodecError> {
    ReedSolomon::new(config.k, config.p)?.decode(config, shards)
}

/// Time source for [`bench_with`]. `Fake` reports a fixed duration per
/// measurement, scaled by the bytes touched, so output is reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchClock {
    Wall,
    Fake { tick_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    pub clock: BenchClock,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repeats: 5,
            clock: BenchClock::Wall,
            seed: 0,
        }
    }
}

pub fn bench(sizes: &[usize], configs: &[(usize, usize)]) -> Result<Vec<CalibrationSample>, CodecError> {
    bench_with(sizes, configs, &BenchOptions::default())
}

/// Median encode and degraded-decode times per `(size, (n, k))`, sizes in the
/// outer loop. Decode always uses the last `k` shards, so at least one data
/// shard is missing and the field-math path runs.
pub fn bench_with(
    sizes: &[usize],
    configs: &[(usize, usize)],
    options: &BenchOptions,
) -> Result<Vec<CalibrationSample>, CodecError> {
    let repeats = options.repeats.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut out = Vec::with_capacity(sizes.len() * configs.len());
    for &size in sizes {
        let mut payload = vec![0u8; size.max(1)];
        rng.fill_bytes(&mut payload);
        for &(n, k) in configs {
            if k == 0 || n <= k {
                return Err(CodecError::ConfigInvalid(format!("bench config n={n}, k={k} needs n > k ≥ 1")));
            }
            let config = CodecConfig::for_payload(k, n - k, payload.len())?;
            let codec = ReedSolomon::new(k, n - k)?;
            let mut enc = Vec::with_capacity(repeats);
            let mut dec = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let start = Instant::now();
                let shards = codec.encode(&config, &payload)?;
                let encode_wall = start.elapsed().as_secs_f64();

                let subset: Vec<(usize, &[u8])> = shards
                    .iter()
                    .enumerate()
                    .skip(n - k)
                    .map(|(i, s)| (i, s.as_slice()))
                    .collect();
                let start = Instant::now();
                let decoded = codec.decode(&config, &subset)?;
                let decode_wall = start.elapsed().as_secs_f64();
                debug_assert_eq!(decoded, payload);

                match options.clock {
                    BenchClock::Wall => {
                        enc.push(encode_wall);
                        dec.push(decode_wall);
                    }
                    BenchClock::Fake { tick_s } => {
                        let stripe = (config.shard_size * k) as f64 / 1e6;
                        enc.push(tick_s * stripe * (n - k) as f64);
                        dec.push(tick_s * stripe * k as f64);
                    }
                }
            }
            out.push(CalibrationSample {
                item_size: size as u64,
                n,
                k,
                encode_time: median(&mut enc).max(f64::MIN_POSITIVE),
                decode_time: median(&mut dec).max(f64::MIN_POSITIVE),
            });
        }
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn random_payload(len: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0u8; len];
        rng.fill_bytes(&mut v);
        v
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    #[test]
    fn mirror_when_k_is_one() {
        let cfg = CodecConfig::for_payload(1, 1, 100).unwrap();
        let shards = encode(&cfg, &random_payload(100, 1)).unwrap();
        assert_eq!(shards.len(), 2);
        assert_eq!(shards[0], shards[1]);
    }

    #[test]
    fn single_parity_is_xor() {
        let cfg = CodecConfig::for_payload(2, 1, 1000).unwrap();
        let shards = encode(&cfg, &random_payload(1000, 2)).unwrap();
        let xor: Vec<u8> = shards[0].iter().zip(&shards[1]).map(|(a, b)| a ^ b).collect();
        assert_eq!(shards[2], xor);
    }

    #[test]
    fn first_parity_row_is_xor_for_wider_codes() {
        for (k, p) in [(3, 2), (6, 3), (10, 4)] {
            let rs = ReedSolomon::new(k, p).unwrap();
            assert!(rs.generator().row(k).iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn systematic_prefix() {
        let payload = random_payload(5000, 3);
        let cfg = CodecConfig::for_payload(4, 2, payload.len()).unwrap();
        let shards = encode(&cfg, &payload).unwrap();
        let mut stream = Vec::new();
        for s in &shards[..4] {
            stream.extend_from_slice(s);
        }
        assert_eq!(&stream[..8], &(payload.len() as u64).to_le_bytes());
        assert_eq!(&stream[8..8 + payload.len()], &payload[..]);
        assert!(stream[8 + payload.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn shard_size_is_aligned() {
        let cfg = CodecConfig::for_payload(3, 2, 1).unwrap();
        assert_eq!(cfg.shard_size, 64);
        let cfg = CodecConfig::for_payload(3, 2, 1000).unwrap();
        assert_eq!(cfg.shard_size, 384);
    }

    #[test]
    fn every_k_subset_reconstructs_k3_p2() {
        let rs = ReedSolomon::new(3, 2).unwrap();
        for seed in 0..4 {
            let payload = random_payload(777 + seed as usize * 31, seed);
            let cfg = CodecConfig::for_payload(3, 2, payload.len()).unwrap();
            let shards = rs.encode(&cfg, &payload).unwrap();
            for subset in subsets(5, 3) {
                let given: Vec<(usize, &[u8])> = subset.iter().map(|&i| (i, shards[i].as_slice())).collect();
                assert_eq!(rs.decode(&cfg, &given).unwrap(), payload, "{subset:?}");
            }
        }
    }

    #[test]
    fn one_mib_k6_p3_random_erasures() {
        let payload = random_payload(1 << 20, 9);
        let cfg = CodecConfig::for_payload(6, 3, payload.len()).unwrap();
        let rs = ReedSolomon::new(6, 3).unwrap();
        let shards = rs.encode(&cfg, &payload).unwrap();
        assert_eq!(shards.len(), 9);
        for subset in subsets(9, 6).into_iter().step_by(7) {
            let given: Vec<(usize, &[u8])> = subset.iter().map(|&i| (i, shards[i].as_slice())).collect();
            assert_eq!(rs.decode(&cfg, &given).unwrap(), payload);
        }
    }

    #[test]
    fn too_few_shards() {
        let payload = random_payload(300, 4);
        let cfg = CodecConfig::for_payload(4, 2, payload.len()).unwrap();
        let shards = encode(&cfg, &payload).unwrap();
        let given: Vec<(usize, &[u8])> = (0..3).map(|i| (i, shards[i].as_slice())).collect();
        assert_eq!(
            decode(&cfg, &given),
            Err(CodecError::InsufficientShards { have: 3, need: 4 })
        );
        let dup: Vec<(usize, &[u8])> = [0, 0, 1, 1, 2].iter().map(|&i| (i, shards[i].as_slice())).collect();
        assert!(matches!(decode(&cfg, &dup), Err(CodecError::InsufficientShards { have: 3, .. })));
    }

    #[test]
    fn wrong_shard_size() {
        let payload = random_payload(300, 5);
        let cfg = CodecConfig::for_payload(2, 1, payload.len()).unwrap();
        let shards = encode(&cfg, &payload).unwrap();
        let short = &shards[1][..10];
        let given: Vec<(usize, &[u8])> = vec![(0, &shards[0]), (1, short)];
        assert!(matches!(decode(&cfg, &given), Err(CodecError::ShardSizeMismatch { index: 1, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(CodecConfig::new(0, 1, 64).is_err());
        assert!(CodecConfig::new(1, 0, 64).is_err());
        assert!(CodecConfig::new(200, 56, 64).is_err());
        assert!(CodecConfig::new(200, 55, 64).is_ok());
        let cfg = CodecConfig::new(2, 1, 64).unwrap();
        assert!(encode(&cfg, &[]).is_err());
        assert!(encode(&cfg, &[0u8; 121]).is_err());
        assert!(encode(&cfg, &[0u8; 120]).is_ok());
    }

    #[test]
    fn bench_shape_and_fake_clock() {
        let opts = BenchOptions {
            repeats: 3,
            clock: BenchClock::Fake { tick_s: 0.001 },
            seed: 1,
        };
        let rows = bench_with(&[1000, 5000], &[(3, 2), (6, 4), (5, 4)], &opts).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].item_size, rows[0].n, rows[0].k), (1000, 3, 2));
        assert_eq!((rows[3].item_size, rows[3].n, rows[3].k), (5000, 3, 2));
        assert!(rows.iter().all(|r| r.encode_time > 0.0 && r.decode_time > 0.0));
        assert_eq!(rows, bench_with(&[1000, 5000], &[(3, 2), (6, 4), (5, 4)], &opts).unwrap());
        let wall = bench(&[2048], &[(4, 2)]).unwrap();
        assert!(wall[0].encode_time > 0.0 && wall[0].decode_time > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_under_erasures(
            k in 1usize..=12,
            p in 1usize..=12,
            len in 1usize..2000,
            seed in any::<u64>(),
            erase_seed in any::<u64>(),
        ) {
            let payload = random_payload(len, seed);
            let cfg = CodecConfig::for_payload(k, p, len).unwrap();
            let rs = ReedSolomon::new(k, p).unwrap();
            let shards = rs.encode(&cfg, &payload).unwrap();
            for (i, s) in shards.iter().enumerate().take(k) {
                let lo = i * cfg.shard_size;
                let stream_end = (lo + cfg.shard_size).min(8 + len);
                if lo >= 8 && lo < 8 + len {
                    prop_assert_eq!(&s[..stream_end - lo], &payload[lo - 8..stream_end - 8]);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(erase_seed);
            let erase = (rng.next_u32() as usize) % (p + 1);
            let mut idx: Vec<usize> = (0..k + p).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, (rng.next_u32() as usize) % (i + 1));
            }
            let kept: Vec<(usize, &[u8])> = idx[erase..].iter().map(|&i| (i, shards[i].as_slice())).collect();
            prop_assert_eq!(rs.decode(&cfg, &kept).unwrap(), payload);
            let too_few: Vec<(usize, &[u8])> = idx[p + 1..].iter().map(|&i| (i, shards[i].as_slice())).collect();
            let insufficient = matches!(
                rs.decode(&cfg, &too_few),
                Err(CodecError::InsufficientShards { .. })
            );
            prop_assert!(insufficient);
        }
    }
}

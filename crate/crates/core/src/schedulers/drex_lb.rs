use crate::model::{chunk_size, ClusterState, DataItem, NodeId, StorageNode};
use crate::perfmodel::TimeModel;

use super::{fits, live_by_free, mapping_probs, meets_target, place, rejection, Decision, Scheduler};

/// Balance-penalty placement: the smallest workable parity count, then the
/// chunk count that leaves free space closest to the cluster average.
#[derive(Debug, Clone, Copy, Default)]
pub struct DrexLb;

impl DrexLb {
    /// `Σ_mapped |free − chunk − avg| + Σ_unmapped |free − avg|` for the first
    /// `n` nodes of `ranked`.
    pub fn balance_penalty(ranked: &[&StorageNode], n: usize, chunk: u64, avg: f64) -> f64 {
        let mapped: f64 = ranked[..n].iter().map(|s| (s.free as f64 - chunk as f64 - avg).abs()).sum();
        let unmapped: f64 = ranked[n..].iter().map(|s| (s.free as f64 - avg).abs()).sum();
        mapped + unmapped
    }
}

impl Scheduler for DrexLb {
    fn name(&self) -> String {
        "drex-lb".into()
    }

    fn schedule(&self, item: &DataItem, state: &ClusterState, _time_model: &TimeModel) -> Decision {
        let ranked = live_by_free(state);
        let l = ranked.len();
        if l == 0 {
            return rejection(state, item);
        }
        let avg = ranked.iter().map(|s| s.free as f64).sum::<f64>() / l as f64;
        for p in 1..l {
            let mut best: Option<(f64, usize)> = None;
            for k in 2..=l - p {
                let n = k + p;
                let mapping = &ranked[..n];
                let chunk = chunk_size(item.size, k);
                if !fits(mapping, chunk) {
                    continue;
                }
                let probs = mapping_probs(mapping.iter().copied(), item.retention_days);
                if !meets_target(&probs, p, item.reliability_target) {
                    continue;
                }
                let bp = Self::balance_penalty(&ranked, n, chunk, avg);
                if best.is_none_or(|(b, _)| bp < b) {
                    best = Some((bp, k));
                }
            }
            if let Some((_, k)) = best {
                return place(item, k, p, &ranked[..k + p]);
            }
        }
        rejection(state, item)
    }

    fn recovery_order(&self, state: &ClusterState) -> Vec<NodeId> {
        live_by_free(state).iter().map(|n| n.id).collect()
    }

    fn adaptive(&self) -> bool {
        true
    }
}

use crate::model::{chunk_size, ClusterState, DataItem, NodeId, StorageNode};
use crate::perfmodel::TimeModel;
use crate::reliability;

use super::{fits, live_by_free, live_by_write_bw, mapping_probs, meets_target, place, rejection, Decision, Scheduler};

/// Minimizes total stored bytes over prefixes of the write-bandwidth ranking.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyMinStorage;

impl GreedyMinStorage {
    /// Largest feasible `k` for an `N`-node mapping, where the mapping is the
    /// first `N` nodes (by write bandwidth) with room for a chunk of that `k`.
    fn best_for_n<'a>(item: &DataItem, ranked: &[&'a StorageNode], n: usize) -> Option<(usize, Vec<&'a StorageNode>)> {
        for k in (1..n).rev() {
            let chunk = chunk_size(item.size, k);
            let mapping: Vec<&StorageNode> = ranked.iter().copied().filter(|s| s.free >= chunk).take(n).collect();
            if mapping.len() < n {
                continue;
            }
            let probs = mapping_probs(mapping.iter().copied(), item.retention_days);
            if meets_target(&probs, n - k, item.reliability_target) {
                return Some((k, mapping));
            }
        }
        None
    }
}

impl Scheduler for GreedyMinStorage {
    fn name(&self) -> String {
        "greedy-min-storage".into()
    }

    fn schedule(&self, item: &DataItem, state: &ClusterState, _time_model: &TimeModel) -> Decision {
        let ranked = live_by_write_bw(state);
        let mut best: Option<(u64, usize, usize, Vec<&StorageNode>)> = None;
        for n in 2..=ranked.len() {
            let Some((k, mapping)) = Self::best_for_n(item, &ranked, n) else {
                continue;
            };
            let stored = chunk_size(item.size, k) * n as u64;
            let better = match &best {
                None => true,
                Some((b_stored, b_k, b_n, _)) => (stored, std::cmp::Reverse(k), n) < (*b_stored, std::cmp::Reverse(*b_k), *b_n),
            };
            if better {
                best = Some((stored, k, n, mapping));
            }
        }
        match best {
            Some((_, k, n, mapping)) => place(item, k, n - k, &mapping),
            None => rejection(state, item),
        }
    }

    fn recovery_order(&self, state: &ClusterState) -> Vec<NodeId> {
        live_by_write_bw(state).iter().map(|n| n.id).collect()
    }

    fn adaptive(&self) -> bool {
        true
    }
}

/// Spreads each item over the emptiest nodes using as few chunks as possible.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyLeastUsed;

impl Scheduler for GreedyLeastUsed {
    fn name(&self) -> String {
        "greedy-least-used".into()
    }

    fn schedule(&self, item: &DataItem, state: &ClusterState, _time_model: &TimeModel) -> Decision {
        let ranked = live_by_free(state);
        for n in 2..=ranked.len() {
            let mapping = &ranked[..n];
            let probs = mapping_probs(mapping.iter().copied(), item.retention_days);
            let Some(p) = reliability::min_parity_for_target(&probs, item.reliability_target) else {
                continue;
            };
            let k = n - p;
            if fits(mapping, chunk_size(item.size, k)) {
                return place(item, k, p, mapping);
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

#[cfg(test)]
mod tests {
    use super::super::testutil::{cluster, item, MB, TB};
    use super::super::{verify_decision, RejectReason};
    use super::*;
    use crate::reliability::oracle::enumerate_availability;

    fn placed(d: &Decision) -> (usize, usize, Vec<usize>) {
        let p = d.placement().expect("placed");
        (p.k, p.p, p.nodes.iter().map(|n| n.0).collect())
    }

    #[test]
    fn gms_homogeneous_reliable_uses_all_nodes() {
        let state = cluster(&[(TB, TB, 200e6, 0.0001); 10]);
        let it = item(100 * MB, 0.9);
        let d = GreedyMinStorage.schedule(&it, &state, &TimeModel::zero());
        assert_eq!(placed(&d), (9, 1, (0..10).collect()));
        verify_decision(&it, &state, &d).unwrap();
    }

    #[test]
    fn gms_two_nodes_is_a_mirror() {
        let state = cluster(&[(TB, TB, 200e6, 0.01), (TB, TB, 100e6, 0.01)]);
        let d = GreedyMinStorage.schedule(&item(MB, 0.9), &state, &TimeModel::zero());
        assert_eq!(placed(&d), (1, 1, vec![0, 1]));
    }

    #[test]
    fn gms_full_cluster_is_capacity_exhausted() {
        let state = cluster(&[(TB, 10, 200e6, 0.01); 4]);
        let d = GreedyMinStorage.schedule(&item(MB, 0.9), &state, &TimeModel::zero());
        assert_eq!(d, Decision::Rejected(RejectReason::CapacityExhausted));
    }

    #[test]
    fn gms_skips_nodes_without_room() {
        // Fastest node is nearly full; the mapping slides past it.
        let state = cluster(&[(TB, 100, 300e6, 0.001), (TB, TB, 200e6, 0.001), (TB, TB, 100e6, 0.001), (TB, TB, 50e6, 0.001)]);
        let it = item(30 * MB, 0.9);
        let d = GreedyMinStorage.schedule(&it, &state, &TimeModel::zero());
        assert_eq!(placed(&d), (2, 1, vec![1, 2, 3]));
        verify_decision(&it, &state, &d).unwrap();
    }

    #[test]
    fn gms_minimal_storage_against_exhaustive_search() {
        let afrs = [0.02, 0.05, 0.01, 0.2, 0.08, 0.03, 0.15];
        let spec: Vec<_> = afrs.iter().enumerate().map(|(i, &a)| (TB, TB, 100e6 + i as f64, a)).collect();
        let state = cluster(&spec);
        for rt in [0.9, 0.99, 0.999, 0.9999] {
            let it = item(12 * MB + 7, rt);
            let d = GreedyMinStorage.schedule(&it, &state, &TimeModel::zero());
            let ranked = live_by_write_bw(&state);
            let mut best = u64::MAX;
            for n in 2..=ranked.len() {
                let probs: Vec<f64> = ranked[..n].iter().map(|s| s.failure_prob(365.0)).collect();
                for k in 1..n {
                    if enumerate_availability(&probs, n - k) >= rt - 1e-12 {
                        best = best.min(chunk_size(it.size, k) * n as u64);
                    }
                }
            }
            let p = d.placement().unwrap();
            assert_eq!(p.stored_bytes(), best, "rt {rt}");
            verify_decision(&it, &state, &d).unwrap();
        }
    }

    #[test]
    fn glu_uses_two_emptiest_nodes() {
        let state = cluster(&[(10, 10, 1e6, 0.0001), (10, 9, 1e6, 0.0001), (10, 8, 1e6, 0.0001), (10, 1, 1e6, 0.0001), (10, 1, 1e6, 0.0001)]);
        let it = item(1, 0.9);
        let d = GreedyLeastUsed.schedule(&it, &state, &TimeModel::zero());
        assert_eq!(placed(&d), (1, 1, vec![0, 1]));
    }

    #[test]
    fn glu_ties_go_to_low_ids() {
        let state = cluster(&[(TB, TB, 1e6, 0.3); 6]);
        let it = item(MB, 0.99);
        let d = GreedyLeastUsed.schedule(&it, &state, &TimeModel::zero());
        let (k, p, nodes) = placed(&d);
        assert_eq!(nodes, (0..k + p).collect::<Vec<_>>());
        verify_decision(&it, &state, &d).unwrap();
    }

    #[test]
    fn glu_infeasible_everywhere() {
        let state = cluster(&[(TB, TB, 1e6, 0.9); 3]);
        let d = GreedyLeastUsed.schedule(&item(MB, 0.999), &state, &TimeModel::zero());
        assert_eq!(d, Decision::Rejected(RejectReason::NoFeasibleMapping));
    }
}

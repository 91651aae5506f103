use crate::model::{chunk_size, ClusterState, DataItem, NodeId, StorageNode};
use crate::perfmodel::TimeModel;

use super::{live_by_write_bw, mapping_probs, meets_target, place, Decision, RejectReason, Scheduler};

/// Fixed `(k, p)` on the fastest writers that have room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StaticEc {
    k: usize,
    p: usize,
}

impl StaticEc {
    pub fn new(k: usize, p: usize) -> Option<Self> {
        (k >= 1 && p >= 1).then_some(StaticEc { k, p })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Slides an `N`-node window over the write-bandwidth ranking of nodes
    /// that can hold a chunk; the first reliable window wins.
    pub fn select<'a>(&self, item: &DataItem, state: &'a ClusterState) -> Result<Vec<&'a StorageNode>, RejectReason> {
        let n = self.k + self.p;
        let ranked = live_by_write_bw(state);
        if ranked.len() < n {
            return Err(RejectReason::NoFeasibleMapping);
        }
        let reliable = |window: &[&StorageNode]| {
            let probs = mapping_probs(window.iter().copied(), item.retention_days);
            meets_target(&probs, self.p, item.reliability_target)
        };
        let chunk = chunk_size(item.size, self.k);
        let roomy: Vec<&StorageNode> = ranked.iter().copied().filter(|s| s.free >= chunk).collect();
        if let Some(window) = roomy.windows(n).find(|w| reliable(w)) {
            return Ok(window.to_vec());
        }
        if ranked.windows(n).any(reliable) {
            Err(RejectReason::CapacityExhausted)
        } else {
            Err(RejectReason::NoFeasibleMapping)
        }
    }
}

impl Scheduler for StaticEc {
    fn name(&self) -> String {
        format!("ec({},{})", self.k, self.p)
    }

    fn schedule(&self, item: &DataItem, state: &ClusterState, _time_model: &TimeModel) -> Decision {
        match self.select(item, state) {
            Ok(nodes) => place(item, self.k, self.p, &nodes),
            Err(reason) => Decision::Rejected(reason),
        }
    }

    fn recovery_order(&self, state: &ClusterState) -> Vec<NodeId> {
        live_by_write_bw(state).iter().map(|n| n.id).collect()
    }

    fn adaptive(&self) -> bool {
        false
    }
}

/// `(k, p)` configurations tried by [`DaosAdaptive`]; replication `r×` is
/// `(1, r − 1)`.
pub const DAOS_MENU: [(usize, usize); 7] = [(8, 1), (8, 2), (4, 1), (4, 2), (1, 1), (1, 3), (1, 5)];

/// Picks the lowest-overhead configuration from a fixed menu that fits and
/// meets the target.
#[derive(Debug, Clone, Copy, Default)]
pub struct DaosAdaptive;

impl Scheduler for DaosAdaptive {
    fn name(&self) -> String {
        "daos".into()
    }

    fn schedule(&self, item: &DataItem, state: &ClusterState, _time_model: &TimeModel) -> Decision {
        let mut best: Option<(StaticEc, Vec<&StorageNode>)> = None;
        let mut capacity_blocked = false;
        for (k, p) in DAOS_MENU {
            let ec = StaticEc { k, p };
            match ec.select(item, state) {
                Ok(nodes) => {
                    // n/k compared exactly as n₁·k₂ < n₂·k₁, then fewer chunks.
                    let better = best.as_ref().is_none_or(|(b, _)| {
                        let (n1, n2) = (k + p, b.k + b.p);
                        (n1 * b.k, n1) < (n2 * k, n2)
                    });
                    if better {
                        best = Some((ec, nodes));
                    }
                }
                Err(RejectReason::CapacityExhausted) => capacity_blocked = true,
                Err(RejectReason::NoFeasibleMapping) => {}
            }
        }
        match best {
            Some((ec, nodes)) => place(item, ec.k, ec.p, &nodes),
            None if capacity_blocked => Decision::Rejected(RejectReason::CapacityExhausted),
            None => Decision::Rejected(RejectReason::NoFeasibleMapping),
        }
    }

    fn recovery_order(&self, state: &ClusterState) -> Vec<NodeId> {
        live_by_write_bw(state).iter().map(|n| n.id).collect()
    }

    fn adaptive(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{cluster, item, MB, TB};
    use super::super::verify_decision;
    use super::*;

    fn ids(d: &Decision) -> Vec<usize> {
        d.placement().unwrap().nodes.iter().map(|n| n.0).collect()
    }

    fn bw_cluster(free: &[u64], afr: f64) -> ClusterState {
        let spec: Vec<_> = free.iter().enumerate().map(|(i, &f)| (TB, f, 100e6 + 10e6 * i as f64, afr)).collect();
        cluster(&spec)
    }

    #[test]
    fn ec32_takes_five_fastest() {
        let state = bw_cluster(&[TB; 10], 0.01);
        let it = item(30 * MB, 0.9);
        let d = StaticEc::new(3, 2).unwrap().schedule(&it, &state, &TimeModel::zero());
        assert_eq!(ids(&d), vec![9, 8, 7, 6, 5]);
        verify_decision(&it, &state, &d).unwrap();
    }

    #[test]
    fn too_few_live_nodes() {
        let state = bw_cluster(&[TB; 4], 0.01);
        let d = StaticEc::new(3, 2).unwrap().schedule(&item(MB, 0.9), &state, &TimeModel::zero());
        assert_eq!(d, Decision::Rejected(RejectReason::NoFeasibleMapping));
    }

    #[test]
    fn window_slides_past_full_fastest_node() {
        let mut free = vec![TB; 10];
        free[9] = 5;
        let state = bw_cluster(&free, 0.01);
        let d = StaticEc::new(3, 2).unwrap().schedule(&item(30 * MB, 0.9), &state, &TimeModel::zero());
        assert_eq!(ids(&d), vec![8, 7, 6, 5, 4]);
    }

    #[test]
    fn window_slides_past_unreliable_nodes() {
        let spec: Vec<_> = (0..7)
            .map(|i| (TB, TB, 100e6 + 10e6 * i as f64, if i >= 5 { 0.9 } else { 0.01 }))
            .collect();
        let state = cluster(&spec);
        let d = StaticEc::new(3, 1).unwrap().schedule(&item(MB, 0.99), &state, &TimeModel::zero());
        assert_eq!(ids(&d), vec![4, 3, 2, 1]);
    }

    #[test]
    fn capacity_versus_reliability_rejections() {
        let state = bw_cluster(&[10; 6], 0.01);
        let d = StaticEc::new(3, 2).unwrap().schedule(&item(MB, 0.9), &state, &TimeModel::zero());
        assert_eq!(d, Decision::Rejected(RejectReason::CapacityExhausted));
        let state = bw_cluster(&[TB; 6], 0.8);
        let d = StaticEc::new(3, 2).unwrap().schedule(&item(MB, 0.99), &state, &TimeModel::zero());
        assert_eq!(d, Decision::Rejected(RejectReason::NoFeasibleMapping));
    }

    #[test]
    fn daos_prefers_ec81_on_reliable_nodes() {
        let state = bw_cluster(&[TB; 10], 0.0001);
        let it = item(80 * MB, 0.9);
        let d = DaosAdaptive.schedule(&it, &state, &TimeModel::zero());
        let p = d.placement().unwrap();
        assert_eq!((p.k, p.p), (8, 1));
        verify_decision(&it, &state, &d).unwrap();
    }

    #[test]
    fn daos_overhead_ranking() {
        // n/k: 9/8 < 10/8 = 5/4 < 6/4 = 3/2 < 2 < 4 < 6; ties by fewer chunks.
        let mut order = DAOS_MENU.to_vec();
        order.sort_by(|a, b| ((a.0 + a.1) * b.0, a.0 + a.1).cmp(&((b.0 + b.1) * a.0, b.0 + b.1)));
        assert_eq!(order, vec![(8, 1), (4, 1), (8, 2), (4, 2), (1, 1), (1, 3), (1, 5)]);
    }

    #[test]
    fn daos_falls_back_to_six_way_replication() {
        let state = bw_cluster(&[TB; 6], 0.5);
        let it = item(MB, 0.98);
        let d = DaosAdaptive.schedule(&it, &state, &TimeModel::zero());
        let p = d.placement().unwrap();
        assert_eq!((p.k, p.p), (1, 5));
        verify_decision(&it, &state, &d).unwrap();
        let d = DaosAdaptive.schedule(&item(MB, 0.99999), &state, &TimeModel::zero());
        assert_eq!(d, Decision::Rejected(RejectReason::NoFeasibleMapping));
    }
}

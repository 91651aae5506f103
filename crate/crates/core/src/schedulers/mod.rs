//! Placement policies. Each one maps a data item onto `(k, p)` plus an
//! ordered list of distinct live nodes, or rejects it.
//!
//! Every placement returned here satisfies the reliability target over the
//! item's retention window and fits the free space of every mapped node.

mod drex_lb;
mod drex_sc;
mod greedy;
mod saturation;
mod static_ec;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ClusterState, DataItem, NodeId, Placement, StorageNode};
use crate::perfmodel::TimeModel;
use crate::reliability;

pub use drex_lb::DrexLb;
pub use drex_sc::{DrexSc, ScCandidate, ScEvaluation};
pub use greedy::{GreedyLeastUsed, GreedyMinStorage};
pub use saturation::{saturation, SaturationCurve, DEFAULT_S_MIN, DEFAULT_STEEPNESS};
pub use static_ec::{DaosAdaptive, StaticEc, DAOS_MENU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    NoFeasibleMapping,
    CapacityExhausted,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoFeasibleMapping => "no_feasible_mapping",
            RejectReason::CapacityExhausted => "capacity_exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Placed(Placement),
    Rejected(RejectReason),
}

impl Decision {
    pub fn placement(&self) -> Option<&Placement> {
        match self {
            Decision::Placed(p) => Some(p),
            Decision::Rejected(_) => None,
        }
    }
}

pub trait Scheduler: Send + Sync {
    fn name(&self) -> String;

    /// Deterministic in `(item, state, self)`.
    fn schedule(&self, item: &DataItem, state: &ClusterState, time_model: &TimeModel) -> Decision;

    /// Preference order of live nodes when a single lost chunk is re-homed.
    fn recovery_order(&self, state: &ClusterState) -> Vec<NodeId>;

    /// Whether the policy may pick a new `(k, p)` for an item after failures.
    fn adaptive(&self) -> bool;
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("unknown scheduler {0:?}; expected drex-sc, drex-lb, greedy-min-storage, greedy-least-used, ec(K,P) or daos")]
    Unknown(String),
    #[error("invalid ec parameters in {0:?}: need K ≥ 1 and P ≥ 1")]
    InvalidEc(String),
}

/// Every policy evaluated by default, in reporting order.
pub const DEFAULT_SCHEDULERS: [&str; 8] = [
    "drex-sc",
    "drex-lb",
    "greedy-min-storage",
    "greedy-least-used",
    "ec(3,2)",
    "ec(4,2)",
    "ec(6,3)",
    "daos",
];

/// Parses `drex-sc | drex-lb | greedy-min-storage | greedy-least-used |
/// ec(K,P) | daos`, case-insensitively.
pub fn from_name(name: &str) -> Result<Box<dyn Scheduler>, SchedulerError> {
    let norm: String = name.trim().to_ascii_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
    match norm.as_str() {
        "drex-sc" => Ok(Box::new(DrexSc::default())),
        "drex-lb" => Ok(Box::new(DrexLb)),
        "greedy-min-storage" => Ok(Box::new(GreedyMinStorage)),
        "greedy-least-used" => Ok(Box::new(GreedyLeastUsed)),
        "daos" => Ok(Box::new(DaosAdaptive)),
        _ => {
            let inner = norm
                .strip_prefix("ec(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| SchedulerError::Unknown(name.to_string()))?;
            let (k, p) = inner
                .split_once(',')
                .ok_or_else(|| SchedulerError::Unknown(name.to_string()))?;
            let k: usize = k.parse().map_err(|_| SchedulerError::InvalidEc(name.to_string()))?;
            let p: usize = p.parse().map_err(|_| SchedulerError::InvalidEc(name.to_string()))?;
            let ec = StaticEc::new(k, p).ok_or_else(|| SchedulerError::InvalidEc(name.to_string()))?;
            Ok(Box::new(ec))
        }
    }
}

/// Per-node failure probabilities over the item's retention window.
pub(crate) fn mapping_probs<'a>(nodes: impl IntoIterator<Item = &'a StorageNode>, days: f64) -> Vec<f64> {
    nodes.into_iter().map(|n| n.failure_prob(days)).collect()
}

pub(crate) fn meets_target(probs: &[f64], p: usize, target: f64) -> bool {
    reliability::availability(probs, p) >= target
}

/// Live nodes sorted by descending free space, ties by ascending id.
pub(crate) fn live_by_free(state: &ClusterState) -> Vec<&StorageNode> {
    let mut nodes: Vec<&StorageNode> = state.live_nodes().collect();
    nodes.sort_by(|a, b| b.free.cmp(&a.free).then(a.id.cmp(&b.id)));
    nodes
}

/// Live nodes sorted by descending write bandwidth, ties by ascending id.
pub(crate) fn live_by_write_bw(state: &ClusterState) -> Vec<&StorageNode> {
    let mut nodes: Vec<&StorageNode> = state.live_nodes().collect();
    nodes.sort_by(|a, b| b.write_bw.total_cmp(&a.write_bw).then(a.id.cmp(&b.id)));
    nodes
}

/// Some node subset meets the target when space is ignored. Spreading over
/// every live node with `p = N - 1` is the most reliable option available.
pub(crate) fn reliable_ignoring_capacity(state: &ClusterState, item: &DataItem) -> bool {
    let probs = mapping_probs(state.live_nodes(), item.retention_days);
    reliability::min_parity_for_target(&probs, item.reliability_target).is_some()
}

pub(crate) fn rejection(state: &ClusterState, item: &DataItem) -> Decision {
    if reliable_ignoring_capacity(state, item) {
        Decision::Rejected(RejectReason::CapacityExhausted)
    } else {
        Decision::Rejected(RejectReason::NoFeasibleMapping)
    }
}

pub(crate) fn place(item: &DataItem, k: usize, p: usize, nodes: &[&StorageNode]) -> Decision {
    let ids = nodes.iter().map(|n| n.id).collect();
    Decision::Placed(Placement::new(item.id, item.size, k, p, ids).expect("scheduler built a well-formed placement"))
}

pub(crate) fn fits(nodes: &[&StorageNode], chunk: u64) -> bool {
    nodes.iter().all(|n| n.free >= chunk)
}

/// Post-hoc check of a decision: well-formed, live, fitting, and reliable.
pub fn verify_decision(item: &DataItem, state: &ClusterState, decision: &Decision) -> Result<(), String> {
    let Decision::Placed(placement) = decision else {
        return Ok(());
    };
    placement.validate().map_err(|e| e.to_string())?;
    if placement.item_id != item.id {
        return Err(format!("placement for {} returned for {}", placement.item_id, item.id));
    }
    if placement.chunk_size != crate::model::chunk_size(item.size, placement.k) {
        return Err(format!("chunk size {} for k={}", placement.chunk_size, placement.k));
    }
    let mut nodes = Vec::with_capacity(placement.nodes.len());
    for &id in &placement.nodes {
        let node = state.node(id).map_err(|e| e.to_string())?;
        if !node.alive {
            return Err(format!("{id} is dead"));
        }
        if node.free < placement.chunk_size {
            return Err(format!("{id} has {} free for a {} byte chunk", node.free, placement.chunk_size));
        }
        nodes.push(node);
    }
    let probs = mapping_probs(nodes, item.retention_days);
    let avail = reliability::availability(&probs, placement.p);
    if avail < item.reliability_target {
        return Err(format!(
            "availability {avail} below target {} for k={} p={}",
            item.reliability_target, placement.k, placement.p
        ));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::model::{ClusterState, DataItem, StorageNode};

    pub const TB: u64 = 1_000_000_000_000;
    pub const MB: u64 = 1_000_000;

    /// Nodes given as `(capacity, free, write_bw, afr)`.
    pub fn cluster(spec: &[(u64, u64, f64, f64)]) -> ClusterState {
        let nodes = spec
            .iter()
            .enumerate()
            .map(|(i, &(cap, _, wbw, afr))| StorageNode::new(i, format!("n{i}"), cap, wbw, wbw, afr).unwrap())
            .collect();
        let mut state = ClusterState::new(nodes).unwrap();
        for (i, &(cap, free, _, _)) in spec.iter().enumerate() {
            state.reserve(crate::model::NodeId(i), cap - free).unwrap();
        }
        state
    }

    pub fn item(size: u64, rt: f64) -> DataItem {
        DataItem::new(1, size, 0.0, 365.0, rt).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in DEFAULT_SCHEDULERS {
            assert_eq!(from_name(name).unwrap().name(), name);
        }
        assert_eq!(from_name(" EC( 10 , 4 ) ").unwrap().name(), "ec(10,4)");
        assert!(matches!(from_name("ec(0,2)"), Err(SchedulerError::InvalidEc(_))));
        assert!(matches!(from_name("ec(3,x)"), Err(SchedulerError::InvalidEc(_))));
        assert!(matches!(from_name("random"), Err(SchedulerError::Unknown(_))));
    }

    #[test]
    fn adaptivity() {
        let adaptive: Vec<bool> = DEFAULT_SCHEDULERS.iter().map(|n| from_name(n).unwrap().adaptive()).collect();
        assert_eq!(adaptive, [true, true, true, true, false, false, false, false]);
    }
}

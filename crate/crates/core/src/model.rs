//! Domain types shared by every other module: storage nodes, data items,
//! placements, and the mutable cluster view a simulation threads through time.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reliability;

/// Dense node index; nodes are numbered `0..L` in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "item#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0} lacks free space for the chunk")]
    CapacityExceeded(NodeId),
    #[error("{0} is not alive")]
    DeadNode(NodeId),
    #[error("{0} is not in the catalog")]
    UnknownNode(NodeId),
    #[error("{0} has no recorded placement")]
    UnknownItem(ItemId),
    #[error("{0} is already placed")]
    DuplicateItem(ItemId),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error("invalid node: {0}")]
    InvalidNode(String),
    #[error("invalid data item: {0}")]
    InvalidItem(String),
}

/// One storage node of the repository.
///
/// Capacities are integer bytes, bandwidths bytes per second, `afr` the
/// annual probability of failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageNode {
    pub id: NodeId,
    pub name: String,
    pub capacity: u64,
    pub free: u64,
    pub write_bw: f64,
    pub read_bw: f64,
    pub afr: f64,
    pub alive: bool,
}

impl StorageNode {
    /// A fresh, empty, live node.
    pub fn new(
        id: usize,
        name: impl Into<String>,
        capacity: u64,
        write_bw: f64,
        read_bw: f64,
        afr: f64,
    ) -> Result<Self, ModelError> {
        let node = StorageNode {
            id: NodeId(id),
            name: name.into(),
            capacity,
            free: capacity,
            write_bw,
            read_bw,
            afr,
            alive: true,
        };
        node.validate()?;
        Ok(node)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.capacity == 0 {
            return Err(ModelError::InvalidNode(format!("{}: capacity must be positive", self.id)));
        }
        if self.free > self.capacity {
            return Err(ModelError::InvalidNode(format!("{}: free exceeds capacity", self.id)));
        }
        if !(self.write_bw > 0.0 && self.write_bw.is_finite()) || !(self.read_bw > 0.0 && self.read_bw.is_finite()) {
            return Err(ModelError::InvalidNode(format!("{}: bandwidths must be positive", self.id)));
        }
        if !(0.0..1.0).contains(&self.afr) {
            return Err(ModelError::InvalidNode(format!("{}: afr {} outside [0,1)", self.id, self.afr)));
        }
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.capacity - self.free
    }

    /// Probability of failing at least once within `days`.
    pub fn failure_prob(&self, days: f64) -> f64 {
        reliability::failure_prob_unchecked(self.afr, days)
    }
}

/// A storage request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub id: ItemId,
    pub size: u64,
    /// Seconds, relative to whatever epoch the trace uses.
    pub submit_time: f64,
    pub retention_days: f64,
    pub reliability_target: f64,
}

impl DataItem {
    pub fn new(id: u64, size: u64, submit_time: f64, retention_days: f64, reliability_target: f64) -> Result<Self, ModelError> {
        let item = DataItem {
            id: ItemId(id),
            size,
            submit_time,
            retention_days,
            reliability_target,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.size == 0 {
            return Err(ModelError::InvalidItem(format!("{}: size must be at least one byte", self.id)));
        }
        if !(self.retention_days > 0.0 && self.retention_days.is_finite()) {
            return Err(ModelError::InvalidItem(format!("{}: retention must be positive", self.id)));
        }
        if !(self.reliability_target > 0.0 && self.reliability_target < 1.0) {
            return Err(ModelError::InvalidItem(format!(
                "{}: reliability target {} outside (0,1)",
                self.id, self.reliability_target
            )));
        }
        if !self.submit_time.is_finite() {
            return Err(ModelError::InvalidItem(format!("{}: submit time is not finite", self.id)));
        }
        Ok(())
    }
}

/// Bytes per chunk when an item of `size` bytes is split into `k` data chunks.
pub fn chunk_size(size: u64, k: usize) -> u64 {
    size.div_ceil(k as u64)
}

/// Erasure-coding parameters plus the node mapping chosen for one item.
///
/// `nodes[i]` holds chunk `i`; the first `k` are data chunks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub item_id: ItemId,
    pub k: usize,
    pub p: usize,
    pub nodes: Vec<NodeId>,
    pub chunk_size: u64,
}

impl Placement {
    pub fn new(item_id: ItemId, size: u64, k: usize, p: usize, nodes: Vec<NodeId>) -> Result<Self, ModelError> {
        let placement = Placement {
            item_id,
            k,
            p,
            chunk_size: if k == 0 { 0 } else { chunk_size(size, k) },
            nodes,
        };
        placement.validate()?;
        Ok(placement)
    }

    pub fn n(&self) -> usize {
        self.k + self.p
    }

    pub fn stored_bytes(&self) -> u64 {
        self.chunk_size * self.nodes.len() as u64
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 || self.p == 0 {
            return Err(ModelError::InvalidPlacement(format!(
                "{}: k={} p={} (both must be at least 1)",
                self.item_id, self.k, self.p
            )));
        }
        if self.nodes.len() != self.k + self.p {
            return Err(ModelError::InvalidPlacement(format!(
                "{}: {} nodes for k+p={}",
                self.item_id,
                self.nodes.len(),
                self.k + self.p
            )));
        }
        let mut seen = self.nodes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.nodes.len() {
            return Err(ModelError::InvalidPlacement(format!("{}: duplicate node in mapping", self.item_id)));
        }
        Ok(())
    }
}

/// Free-space and liveness view of the repository plus every recorded placement.
///
/// Single writer: one simulation owns one state. Schedulers only ever see it
/// through `&ClusterState`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    nodes: Vec<StorageNode>,
    placements: BTreeMap<ItemId, Placement>,
    pub clock: f64,
    /// Running minimum over item sizes observed so far.
    min_item_size: Option<u64>,
    /// Per-node bytes held outside any placement.
    reserved: Vec<u64>,
}

impl ClusterState {
    /// Builds a state from catalog nodes. Ids are reassigned densely in the
    /// given order and every node starts empty and alive.
    pub fn new(nodes: Vec<StorageNode>) -> Result<Self, ModelError> {
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, mut n)| {
                n.id = NodeId(i);
                n.free = n.capacity;
                n.alive = true;
                n.validate().map(|_| n)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ClusterState {
            reserved: vec![0; nodes.len()],
            nodes,
            placements: BTreeMap::new(),
            clock: 0.0,
            min_item_size: None,
        })
    }

    pub fn nodes(&self) -> &[StorageNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&StorageNode, ModelError> {
        self.nodes.get(id.0).ok_or(ModelError::UnknownNode(id))
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = &StorageNode> {
        self.nodes.iter().filter(|n| n.alive)
    }

    pub fn live_count(&self) -> usize {
        self.live_nodes().count()
    }

    pub fn placements(&self) -> &BTreeMap<ItemId, Placement> {
        &self.placements
    }

    pub fn placement(&self, item: ItemId) -> Option<&Placement> {
        self.placements.get(&item)
    }

    pub fn min_item_size(&self) -> Option<u64> {
        self.min_item_size
    }

    pub fn observe_item_size(&mut self, size: u64) {
        self.min_item_size = Some(self.min_item_size.map_or(size, |m| m.min(size)));
    }

    pub fn free_vector(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.free).collect()
    }

    fn check_mapping(&self, chunk: u64, nodes: &[NodeId]) -> Result<(), ModelError> {
        for &id in nodes {
            let node = self.node(id)?;
            if !node.alive {
                return Err(ModelError::DeadNode(id));
            }
            if node.free < chunk {
                return Err(ModelError::CapacityExceeded(id));
            }
        }
        Ok(())
    }

    /// Records `placement` and charges one chunk to every mapped node.
    /// Nothing is mutated when an error is returned.
    pub fn apply_placement(&mut self, placement: Placement) -> Result<(), ModelError> {
        placement.validate()?;
        if self.placements.contains_key(&placement.item_id) {
            return Err(ModelError::DuplicateItem(placement.item_id));
        }
        self.check_mapping(placement.chunk_size, &placement.nodes)?;
        for id in &placement.nodes {
            self.nodes[id.0].free -= placement.chunk_size;
        }
        self.placements.insert(placement.item_id, placement);
        Ok(())
    }

    /// Deletes the placement of `item`, crediting its chunk back to every
    /// mapped node that is still alive. Dead nodes hold nothing reclaimable.
    pub fn remove_placement(&mut self, item: ItemId) -> Result<Placement, ModelError> {
        let placement = self.placements.remove(&item).ok_or(ModelError::UnknownItem(item))?;
        for id in &placement.nodes {
            let node = &mut self.nodes[id.0];
            if node.alive {
                node.free += placement.chunk_size;
            }
        }
        Ok(placement)
    }

    /// Moves chunk slot held by `from` onto `to`, charging `to` one chunk.
    pub fn replace_chunk(&mut self, item: ItemId, from: NodeId, to: NodeId) -> Result<(), ModelError> {
        let placement = self.placements.get(&item).ok_or(ModelError::UnknownItem(item))?;
        let slot = placement
            .nodes
            .iter()
            .position(|&n| n == from)
            .ok_or_else(|| ModelError::InvalidPlacement(format!("{item}: {from} is not in the mapping")))?;
        if placement.nodes.contains(&to) {
            return Err(ModelError::InvalidPlacement(format!("{item}: {to} already holds a chunk")));
        }
        let chunk = placement.chunk_size;
        self.check_mapping(chunk, &[to])?;
        if self.nodes[from.0].alive {
            self.nodes[from.0].free += chunk;
        }
        self.nodes[to.0].free -= chunk;
        self.placements.get_mut(&item).expect("checked above").nodes[slot] = to;
        Ok(())
    }

    /// Charges `bytes` of pre-existing data to a live node.
    pub fn reserve(&mut self, id: NodeId, bytes: u64) -> Result<(), ModelError> {
        self.check_mapping(bytes, &[id])?;
        self.nodes[id.0].free -= bytes;
        self.reserved[id.0] += bytes;
        Ok(())
    }

    /// Marks a node permanently failed. Returns false if it was already dead.
    pub fn kill_node(&mut self, id: NodeId) -> Result<bool, ModelError> {
        let node = self.nodes.get_mut(id.0).ok_or(ModelError::UnknownNode(id))?;
        let was_alive = node.alive;
        node.alive = false;
        Ok(was_alive)
    }

    /// Items holding a chunk on `id`, ascending by item id.
    pub fn items_on(&self, id: NodeId) -> Vec<ItemId> {
        self.placements
            .values()
            .filter(|p| p.nodes.contains(&id))
            .map(|p| p.item_id)
            .collect()
    }

    /// Bytes currently held by live nodes on behalf of placements.
    pub fn placed_bytes_on_live(&self) -> u64 {
        self.placements
            .values()
            .flat_map(|p| p.nodes.iter().map(move |n| (n, p.chunk_size)))
            .filter(|(n, _)| self.nodes[n.0].alive)
            .map(|(_, c)| c)
            .sum()
    }

    /// Checks the free-space bookkeeping invariant on every live node.
    pub fn check_invariants(&self) -> Result<(), ModelError> {
        let mut held = self.reserved.clone();
        for p in self.placements.values() {
            p.validate()?;
            for n in &p.nodes {
                let slot = held.get_mut(n.0).ok_or(ModelError::UnknownNode(*n))?;
                *slot += p.chunk_size;
            }
        }
        for node in self.nodes.iter().filter(|n| n.alive) {
            if node.capacity.checked_sub(held[node.id.0]) != Some(node.free) {
                return Err(ModelError::InvalidNode(format!(
                    "{}: free {} but capacity {} minus held {}",
                    node.id, node.free, node.capacity, held[node.id.0]
                )));
            }
        }
        Ok(())
    }
}

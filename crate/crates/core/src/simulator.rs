//! Trace replay: items are scheduled in submission order, nodes fail at day
//! boundaries, and lost chunks are re-homed or their items dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ClusterState, DataItem, ItemId, ModelError, NodeId, Placement, StorageNode};
use crate::perfmodel::{transfer_time, Direction, TimeModel};
use crate::reliability::{self, DAYS_PER_YEAR};
use crate::schedulers::{self, mapping_probs, meets_target, Decision, RejectReason, Scheduler, SchedulerError};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
const FAILURE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FailureMode {
    Off,
    /// Every live node draws against its daily failure probability at each
    /// day boundary.
    Daily,
    /// Exactly `count` failures, on boundaries drawn uniformly over the run;
    /// victims are drawn among live nodes in proportion to their daily
    /// failure probability.
    Forced { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub failure_mode: FailureMode,
    pub year_days: f64,
    /// Count one read and one decode per stored item.
    pub read_once: bool,
    /// Add recovery decode, re-encode and chunk writes to the time total.
    pub count_recovery_io: bool,
    /// Time each scheduling call. Off keeps reports byte-reproducible.
    pub measure_overhead: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            failure_mode: FailureMode::Off,
            year_days: DAYS_PER_YEAR,
            read_once: true,
            count_recovery_io: false,
            measure_overhead: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("no item was stored by both runs")]
    EmptyIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemOutcome {
    Stored,
    /// Stored once, then dropped after a failure.
    Lost,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: ItemId,
    pub size: u64,
    pub reliability_target: f64,
    pub outcome: ItemOutcome,
    pub k: usize,
    pub p: usize,
    pub nodes: Vec<NodeId>,
    pub encode_s: f64,
    pub write_s: f64,
    pub read_s: f64,
    pub decode_s: f64,
    pub recovery_s: f64,
    pub sched_s: f64,
}

impl ItemRecord {
    /// Time charged to this item in the throughput denominator.
    fn io_time(&self, count_recovery: bool) -> f64 {
        let base = self.encode_s + self.write_s + self.read_s + self.decode_s;
        if count_recovery {
            base + self.recovery_s
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub day: u64,
    pub node: NodeId,
    pub items_recovered: usize,
    pub items_lost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadStats {
    pub mean_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scheduler: String,
    pub seed: u64,
    pub items_submitted: usize,
    pub total_submitted_bytes: u64,
    /// W: bytes of items stored at the end of the run.
    pub stored_bytes: u64,
    pub proportion_stored: f64,
    /// T in MB/s: W over the summed encode, write, read and decode times of
    /// the stored items.
    pub throughput_mbs: f64,
    pub io_time_s: f64,
    pub items_ever_stored: usize,
    pub items_lost: usize,
    /// Items still stored over items ever stored.
    pub retained_after_failures: f64,
    pub rejections: BTreeMap<String, usize>,
    pub failures: Vec<FailureEvent>,
    pub scheduler_overhead: OverheadStats,
    pub count_recovery_io: bool,
    pub final_free: Vec<u64>,
    pub items: Vec<ItemRecord>,
}

impl SimReport {
    /// Most frequent rejection reason, ties to `NoFeasibleMapping`.
    pub fn dominant_rejection(&self) -> Option<RejectReason> {
        let nf = self.rejections.get(&RejectReason::NoFeasibleMapping.to_string()).copied().unwrap_or(0);
        let ce = self.rejections.get(&RejectReason::CapacityExhausted.to_string()).copied().unwrap_or(0);
        match (nf, ce) {
            (0, 0) => None,
            (nf, ce) if nf >= ce => Some(RejectReason::NoFeasibleMapping),
            _ => Some(RejectReason::CapacityExhausted),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Runs `items` against a fresh cluster built from `catalog`.
pub fn run(
    items: &[DataItem],
    catalog: &[StorageNode],
    scheduler: &dyn Scheduler,
    time_model: &TimeModel,
    config: &SimConfig,
) -> Result<SimReport, SimError> {
    if catalog.is_empty() {
        return Err(SimError::EmptyCatalog);
    }
    for item in items {
        item.validate()?;
    }
    Simulation::new(items, catalog, scheduler, time_model, config)?.run()
}

/// [`run`] with the scheduler selected by name.
pub fn run_named(
    items: &[DataItem],
    catalog: &[StorageNode],
    scheduler: &str,
    time_model: &TimeModel,
    config: &SimConfig,
) -> Result<SimReport, SimError> {
    let scheduler = schedulers::from_name(scheduler)?;
    run(items, catalog, scheduler.as_ref(), time_model, config)
}

struct Simulation<'a> {
    items: Vec<&'a DataItem>,
    scheduler: &'a dyn Scheduler,
    time_model: &'a TimeModel,
    config: &'a SimConfig,
    state: ClusterState,
    rng: ChaCha8Rng,
    records: Vec<ItemRecord>,
    /// Item id to index in `records` and `items`.
    index: BTreeMap<ItemId, usize>,
    failures: Vec<FailureEvent>,
}

impl<'a> Simulation<'a> {
    fn new(
        items: &'a [DataItem],
        catalog: &[StorageNode],
        scheduler: &'a dyn Scheduler,
        time_model: &'a TimeModel,
        config: &'a SimConfig,
    ) -> Result<Self, SimError> {
        let mut sorted: Vec<&DataItem> = items.iter().collect();
        sorted.sort_by(|a, b| a.submit_time.total_cmp(&b.submit_time));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(FAILURE_STREAM);
        Ok(Simulation {
            items: sorted,
            scheduler,
            time_model,
            config,
            state: ClusterState::new(catalog.to_vec())?,
            rng,
            records: Vec::with_capacity(items.len()),
            index: BTreeMap::new(),
            failures: Vec::new(),
        })
    }

    fn p_day(&self, node: &StorageNode) -> f64 {
        reliability::failure_prob_unchecked(node.afr, DAYS_PER_YEAR / self.config.year_days)
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        let t0 = self.items.first().map_or(0.0, |i| i.submit_time);
        let day_of = |t: f64| ((t - t0) / SECONDS_PER_DAY).floor().max(0.0) as u64;
        let last_day = self.items.last().map_or(0, |i| day_of(i.submit_time));

        // Boundary `b` closes day `b - 1`. Forced failures land on 1..=last_day+1.
        let mut forced: BTreeMap<u64, usize> = BTreeMap::new();
        if let FailureMode::Forced { count } = self.config.failure_mode {
            for _ in 0..count {
                *forced.entry(self.rng.random_range(1..=last_day + 1)).or_default() += 1;
            }
        }

        let mut boundary = 0u64;
        for i in 0..self.items.len() {
            let item = self.items[i];
            let day = day_of(item.submit_time);
            while boundary < day {
                boundary += 1;
                self.failure_round(boundary, &forced)?;
            }
            self.submit(item)?;
        }
        if !self.items.is_empty() {
            self.failure_round(last_day + 1, &forced)?;
        }
        Ok(self.report())
    }

    fn submit(&mut self, item: &DataItem) -> Result<(), SimError> {
        self.state.clock = item.submit_time;
        self.state.observe_item_size(item.size);
        let start = self.config.measure_overhead.then(Instant::now);
        let decision = self.scheduler.schedule(item, &self.state, self.time_model);
        let sched_s = start.map_or(0.0, |s| s.elapsed().as_secs_f64());

        let mut record = ItemRecord {
            id: item.id,
            size: item.size,
            reliability_target: item.reliability_target,
            outcome: ItemOutcome::Stored,
            k: 0,
            p: 0,
            nodes: Vec::new(),
            encode_s: 0.0,
            write_s: 0.0,
            read_s: 0.0,
            decode_s: 0.0,
            recovery_s: 0.0,
            sched_s,
        };
        match decision {
            Decision::Placed(placement) => {
                let nodes: Vec<&StorageNode> = placement
                    .nodes
                    .iter()
                    .map(|&id| self.state.node(id))
                    .collect::<Result<_, _>>()?;
                record.encode_s = self.time_model.predict_encode(item.size, placement.n(), placement.k);
                record.write_s = transfer_time(placement.chunk_size, nodes.iter().copied(), Direction::Write)
                    .expect("placement maps at least two nodes");
                if self.config.read_once {
                    record.read_s = transfer_time(placement.chunk_size, nodes.iter().copied(), Direction::Read)
                        .expect("placement maps at least two nodes");
                    record.decode_s = self.time_model.predict_decode(item.size, placement.k);
                }
                record.k = placement.k;
                record.p = placement.p;
                record.nodes = placement.nodes.clone();
                self.state.apply_placement(placement)?;
            }
            Decision::Rejected(reason) => record.outcome = ItemOutcome::Rejected(reason),
        }
        if self.index.insert(item.id, self.records.len()).is_some() {
            return Err(ModelError::DuplicateItem(item.id).into());
        }
        self.records.push(record);
        Ok(())
    }

    fn failure_round(&mut self, boundary: u64, forced: &BTreeMap<u64, usize>) -> Result<(), SimError> {
        let victims: Vec<NodeId> = match self.config.failure_mode {
            FailureMode::Off => Vec::new(),
            FailureMode::Daily => {
                let mut victims = Vec::new();
                let live: Vec<(NodeId, f64)> = self.state.live_nodes().map(|n| (n.id, self.p_day(n))).collect();
                for (id, p) in live {
                    let u: f64 = self.rng.random();
                    if u <= p {
                        victims.push(id);
                    }
                }
                victims
            }
            FailureMode::Forced { .. } => {
                let count = forced.get(&boundary).copied().unwrap_or(0);
                let mut victims = Vec::with_capacity(count);
                for _ in 0..count {
                    let live: Vec<(NodeId, f64)> = self
                        .state
                        .live_nodes()
                        .filter(|n| !victims.contains(&n.id))
                        .map(|n| (n.id, self.p_day(n)))
                        .collect();
                    if live.is_empty() {
                        break;
                    }
                    let total: f64 = live.iter().map(|(_, w)| w).sum();
                    let pick = if total > 0.0 {
                        let mut u = self.rng.random::<f64>() * total;
                        live.iter()
                            .find(|(_, w)| {
                                u -= w;
                                u < 0.0
                            })
                            .unwrap_or(live.last().expect("non-empty"))
                            .0
                    } else {
                        live[self.rng.random_range(0..live.len())].0
                    };
                    victims.push(pick);
                }
                victims
            }
        };
        for id in victims {
            self.state.kill_node(id)?;
            self.recover(boundary, id)?;
        }
        Ok(())
    }

    /// Re-homes or drops every item that held a chunk on the newly dead node.
    fn recover(&mut self, day: u64, dead: NodeId) -> Result<(), SimError> {
        let mut event = FailureEvent {
            day,
            node: dead,
            items_recovered: 0,
            items_lost: 0,
        };
        for item_id in self.state.items_on(dead) {
            let placement = self.state.placement(item_id).expect("listed by items_on").clone();
            let rec = self.index[&item_id];
            let item = self.items[rec];
            let survivors = placement
                .nodes
                .iter()
                .filter(|&&n| self.state.node(n).is_ok_and(|s| s.alive))
                .count();
            let recovered = survivors >= placement.k
                && (self.replace_chunk(item, &placement, dead)? || self.replan(item)?);
            if recovered {
                event.items_recovered += 1;
            } else {
                if self.state.placement(item_id).is_some() {
                    self.state.remove_placement(item_id)?;
                }
                self.records[rec].outcome = ItemOutcome::Lost;
                event.items_lost += 1;
            }
        }
        self.failures.push(event);
        Ok(())
    }

    /// Moves the lost chunk to the first preferred node that keeps the
    /// mapping reliable with the same parity.
    fn replace_chunk(&mut self, item: &DataItem, placement: &Placement, dead: NodeId) -> Result<bool, SimError> {
        let chunk = placement.chunk_size;
        let candidate = self.scheduler.recovery_order(&self.state).into_iter().find(|&id| {
            if placement.nodes.contains(&id) {
                return false;
            }
            let node = self.state.node(id).expect("recovery order lists state nodes");
            if !node.alive || node.free < chunk {
                return false;
            }
            let mapped = placement
                .nodes
                .iter()
                .map(|&n| if n == dead { id } else { n })
                .map(|n| self.state.node(n).expect("mapped nodes exist"));
            let probs = mapping_probs(mapped, item.retention_days);
            meets_target(&probs, placement.p, item.reliability_target)
        });
        let Some(target) = candidate else {
            return Ok(false);
        };
        self.state.replace_chunk(item.id, dead, target)?;
        let node = self.state.node(target)?;
        let cost = self.time_model.predict_decode(item.size, placement.k)
            + self.time_model.predict_encode(item.size, placement.n(), placement.k)
            + chunk as f64 / node.write_bw;
        let rec = self.index[&item.id];
        self.records[rec].recovery_s += cost;
        self.records[rec].nodes = self.state.placement(item.id).expect("just updated").nodes.clone();
        Ok(true)
    }

    /// Adaptive policies may re-encode the item from scratch with a new
    /// `(k, p)` over the surviving cluster.
    fn replan(&mut self, item: &DataItem) -> Result<bool, SimError> {
        if !self.scheduler.adaptive() {
            return Ok(false);
        }
        let old = self.state.remove_placement(item.id)?;
        let Decision::Placed(placement) = self.scheduler.schedule(item, &self.state, self.time_model) else {
            return Ok(false);
        };
        let nodes: Vec<&StorageNode> = placement
            .nodes
            .iter()
            .map(|&id| self.state.node(id))
            .collect::<Result<_, _>>()?;
        let cost = self.time_model.predict_decode(item.size, old.k)
            + self.time_model.predict_encode(item.size, placement.n(), placement.k)
            + transfer_time(placement.chunk_size, nodes.iter().copied(), Direction::Write)
                .expect("placement maps at least two nodes");
        let rec = self.index[&item.id];
        let r = &mut self.records[rec];
        r.recovery_s += cost;
        r.k = placement.k;
        r.p = placement.p;
        r.nodes = placement.nodes.clone();
        self.state.apply_placement(placement)?;
        Ok(true)
    }

    fn report(self) -> SimReport {
        let items = &self.items;
        let total_submitted_bytes: u64 = items.iter().map(|i| i.size).sum();
        let stored: Vec<&ItemRecord> = self.records.iter().filter(|r| r.outcome == ItemOutcome::Stored).collect();
        let stored_bytes: u64 = stored.iter().map(|r| r.size).sum();
        let io_time_s: f64 = stored.iter().map(|r| r.io_time(self.config.count_recovery_io)).sum();
        let items_lost = self.records.iter().filter(|r| r.outcome == ItemOutcome::Lost).count();
        let items_ever_stored = stored.len() + items_lost;
        let mut rejections = BTreeMap::new();
        for r in &self.records {
            if let ItemOutcome::Rejected(reason) = r.outcome {
                *rejections.entry(reason.to_string()).or_insert(0) += 1;
            }
        }
        let sched: Vec<f64> = self.records.iter().map(|r| r.sched_s).collect();
        let scheduler_overhead = OverheadStats {
            mean_s: if sched.is_empty() { 0.0 } else { sched.iter().sum::<f64>() / sched.len() as f64 },
            max_s: sched.iter().copied().fold(0.0, f64::max),
        };
        SimReport {
            scheduler: self.scheduler.name(),
            seed: self.config.seed,
            items_submitted: items.len(),
            total_submitted_bytes,
            stored_bytes,
            proportion_stored: ratio(stored_bytes as f64, total_submitted_bytes as f64),
            throughput_mbs: ratio(stored_bytes as f64 / 1e6, io_time_s),
            io_time_s,
            items_ever_stored,
            items_lost,
            retained_after_failures: ratio(stored.len() as f64, items_ever_stored as f64),
            rejections,
            failures: self.failures,
            scheduler_overhead,
            count_recovery_io: self.config.count_recovery_io,
            final_free: self.state.free_vector(),
            items: self.records,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Throughput difference `T_a − T_b` in MB/s, both restricted to the items
/// stored by both runs. Positive means `a` was faster.
pub fn matched_throughput(a: &SimReport, b: &SimReport) -> Result<MatchedThroughput, SimError> {
    fn stored(r: &SimReport) -> BTreeMap<ItemId, &ItemRecord> {
        r.items
            .iter()
            .filter(|i| i.outcome == ItemOutcome::Stored)
            .map(|i| (i.id, i))
            .collect()
    }
    let (sa, sb) = (stored(a), stored(b));
    let common: BTreeSet<ItemId> = sa.keys().filter(|id| sb.contains_key(id)).copied().collect();
    if common.is_empty() {
        return Err(SimError::EmptyIntersection);
    }
    let throughput = |s: &BTreeMap<ItemId, &ItemRecord>, count_recovery: bool| {
        let bytes: u64 = common.iter().map(|id| s[id].size).sum();
        let time: f64 = common.iter().map(|id| s[id].io_time(count_recovery)).sum();
        ratio(bytes as f64 / 1e6, time)
    };
    let ta = throughput(&sa, a.count_recovery_io);
    let tb = throughput(&sb, b.count_recovery_io);
    Ok(MatchedThroughput {
        matched_items: common.len(),
        throughput_a_mbs: ta,
        throughput_b_mbs: tb,
        delta_mbs: ta - tb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedThroughput {
    pub matched_items: usize,
    pub throughput_a_mbs: f64,
    pub throughput_b_mbs: f64,
    pub delta_mbs: f64,
}

pub const SUMMARY_HEADER: &str =
    "scheduler,catalog,trace,rt_policy,seed,stored_bytes,proportion,throughput_mbs,retained_pct,mean_sched_us";

/// One summary CSV row per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheduler: String,
    pub catalog: String,
    pub trace: String,
    pub rt_policy: String,
    pub seed: u64,
    pub stored_bytes: u64,
    pub proportion: f64,
    pub throughput_mbs: f64,
    pub retained_pct: f64,
    pub mean_sched_us: f64,
}

impl SummaryRow {
    pub fn from_report(report: &SimReport, catalog: &str, trace: &str, rt_policy: &str) -> Self {
        SummaryRow {
            scheduler: report.scheduler.clone(),
            catalog: catalog.to_string(),
            trace: trace.to_string(),
            rt_policy: rt_policy.to_string(),
            seed: report.seed,
            stored_bytes: report.stored_bytes,
            proportion: report.proportion_stored,
            throughput_mbs: report.throughput_mbs,
            retained_pct: report.retained_after_failures * 100.0,
            mean_sched_us: report.scheduler_overhead.mean_s * 1e6,
        }
    }

    /// Fixed precision so identical runs print identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{:.6},{:.3},{:.2},{:.3}",
            csv_field(&self.scheduler),
            csv_field(&self.catalog),
            csv_field(&self.trace),
            csv_field(&self.rt_policy),
            self.seed,
            self.stored_bytes,
            self.proportion,
            self.throughput_mbs,
            self.retained_pct,
            self.mean_sched_us
        )
        .expect("writing to a String cannot fail");
        s
    }
}

/// Quotes fields containing separators; `ec(3,2)` needs it.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

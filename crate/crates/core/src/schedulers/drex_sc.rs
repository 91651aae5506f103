use crate::model::{chunk_size, ClusterState, DataItem, NodeId, StorageNode};
use crate::perfmodel::TimeModel;
use crate::reliability;

use super::saturation::{SaturationCurve, DEFAULT_STEEPNESS};
use super::{live_by_free, place, Decision, RejectReason, Scheduler, DEFAULT_S_MIN};

pub const DEFAULT_MAX_MAPPINGS: usize = 1 << 10;

/// Multi-objective placement: Pareto front over (transfer and coding time,
/// stored bytes, node saturation), scored with a weight on time that fades as
/// the whole system fills up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrexSc {
    pub steepness: f64,
    pub max_mappings: usize,
}

impl Default for DrexSc {
    fn default() -> Self {
        DrexSc {
            steepness: DEFAULT_STEEPNESS,
            max_mappings: DEFAULT_MAX_MAPPINGS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScCandidate {
    /// Position in the mapping enumeration.
    pub index: usize,
    pub nodes: Vec<NodeId>,
    pub k: usize,
    pub p: usize,
    pub chunk_size: u64,
    pub duration: f64,
    pub storage: u64,
    pub saturation: f64,
}

impl ScCandidate {
    fn objectives(&self) -> [f64; 3] {
        [self.duration, self.storage as f64, self.saturation]
    }

    /// Weakly better on every objective and strictly better on one.
    pub fn dominates(&self, other: &ScCandidate) -> bool {
        let (a, b) = (self.objectives(), other.objectives());
        a.iter().zip(&b).all(|(x, y)| x <= y) && a.iter().zip(&b).any(|(x, y)| x < y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScEvaluation {
    /// Feasible, fitting candidates in enumeration order.
    pub candidates: Vec<ScCandidate>,
    /// Indices into `candidates`, in enumeration order.
    pub front: Vec<usize>,
    /// Parallel to `front`.
    pub scores: Vec<f64>,
    pub system_saturation: f64,
    /// Index into `candidates`.
    pub chosen: Option<usize>,
    /// Some mapping met the target but lacked space.
    pub capacity_blocked: bool,
}

/// Node subsets as rank indices: contiguous windows ordered by start then
/// length, then every other subset of size ≥ 2 in lexicographic order, capped
/// at `max` in total.
pub fn enumerate_mappings(l: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    'windows: for start in 0..l {
        for len in 2..=l - start {
            if out.len() >= max {
                break 'windows;
            }
            out.push((start..start + len).collect());
        }
    }
    let mut stack: Vec<usize> = Vec::new();
    lexicographic(l, max, &mut stack, &mut out);
    out
}

fn lexicographic(l: usize, max: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let from = prefix.last().map_or(0, |&x| x + 1);
    for next in from..l {
        if out.len() >= max {
            return;
        }
        prefix.push(next);
        let contiguous = prefix.last().unwrap() - prefix[0] + 1 == prefix.len();
        if prefix.len() >= 2 && !contiguous {
            out.push(prefix.clone());
        }
        lexicographic(l, max, prefix, out);
        prefix.pop();
    }
}

impl DrexSc {
    pub fn new(steepness: f64, max_mappings: usize) -> Self {
        DrexSc { steepness, max_mappings }
    }

    fn curve(&self, item: &DataItem, state: &ClusterState) -> SaturationCurve {
        let s_min = state.min_item_size().unwrap_or(DEFAULT_S_MIN).min(item.size);
        SaturationCurve::new(s_min, self.steepness)
    }

    /// Full candidate evaluation, exposed for inspection and testing.
    pub fn evaluate(&self, item: &DataItem, state: &ClusterState, time_model: &TimeModel) -> ScEvaluation {
        let ranked = live_by_free(state);
        let probs: Vec<f64> = ranked.iter().map(|s| s.failure_prob(item.retention_days)).collect();
        let curve = self.curve(item, state);

        let (used, cap) = ranked
            .iter()
            .fold((0u64, 0u64), |(u, c), s| (u + s.used(), c + s.capacity));
        let system_saturation = curve.value(used, cap);

        let mut candidates = Vec::new();
        let mut capacity_blocked = false;
        let mut mapping_probs = Vec::with_capacity(ranked.len());
        let mut nodes: Vec<&StorageNode> = Vec::with_capacity(ranked.len());
        for (index, ranks) in enumerate_mappings(ranked.len(), self.max_mappings).into_iter().enumerate() {
            mapping_probs.clear();
            mapping_probs.extend(ranks.iter().map(|&r| probs[r]));
            let Some((k, p)) = reliability::best_kp_for_mapping(&mapping_probs, item.size, item.reliability_target) else {
                continue;
            };
            let chunk = chunk_size(item.size, k);
            nodes.clear();
            nodes.extend(ranks.iter().map(|&r| ranked[r]));
            if nodes.iter().any(|s| s.free < chunk) {
                capacity_blocked = true;
                continue;
            }
            let min_w = nodes.iter().map(|s| s.write_bw).fold(f64::INFINITY, f64::min);
            let min_r = nodes.iter().map(|s| s.read_bw).fold(f64::INFINITY, f64::min);
            let n = ranks.len();
            let duration = chunk as f64 / min_w
                + chunk as f64 / min_r
                + time_model.predict_encode(item.size, n, k)
                + time_model.predict_decode(item.size, k);
            let saturation = nodes.iter().map(|s| curve.value(s.used() + chunk, s.capacity)).sum();
            candidates.push(ScCandidate {
                index,
                nodes: nodes.iter().map(|s| s.id).collect(),
                k,
                p,
                chunk_size: chunk,
                duration,
                storage: chunk * n as u64,
                saturation,
            });
        }

        let front = pareto_front(&candidates);
        let scores = score_front(&candidates, &front, system_saturation);
        let mut chosen: Option<(usize, f64)> = None;
        for (&c, &s) in front.iter().zip(&scores) {
            if chosen.is_none_or(|(_, best)| s > best) {
                chosen = Some((c, s));
            }
        }
        ScEvaluation {
            candidates,
            front,
            scores,
            system_saturation,
            chosen: chosen.map(|(c, _)| c),
            capacity_blocked,
        }
    }
}

/// Non-dominated candidates, returned in enumeration order. After a
/// lexicographic sort a candidate can only be dominated by an earlier one, and
/// anything dominated by a non-front member is dominated by a front member.
fn pareto_front(candidates: &[ScCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (candidates[a].objectives(), candidates[b].objectives());
        x[0].total_cmp(&y[0])
            .then(x[1].total_cmp(&y[1]))
            .then(x[2].total_cmp(&y[2]))
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| candidates[f].dominates(&candidates[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// `1 − (v − min)/(max − min)`; 1 when every value is equal.
fn progress(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        1.0 - (v - min) / (max - min)
    } else {
        1.0
    }
}

fn score_front(candidates: &[ScCandidate], front: &[usize], system_saturation: f64) -> Vec<f64> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in front {
        for (j, v) in candidates[i].objectives().into_iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    front
        .iter()
        .map(|&i| {
            let o = candidates[i].objectives();
            let [d, s, sat] = [0, 1, 2].map(|j| progress(o[j], lo[j], hi[j]));
            (1.0 - system_saturation) * d + (s + sat) / 2.0
        })
        .collect()
}

impl Scheduler for DrexSc {
    fn name(&self) -> String {
        "drex-sc".into()
    }

    fn schedule(&self, item: &DataItem, state: &ClusterState, time_model: &TimeModel) -> Decision {
        let eval = self.evaluate(item, state, time_model);
        match eval.chosen {
            Some(c) => {
                let cand = &eval.candidates[c];
                let nodes: Vec<&StorageNode> = cand
                    .nodes
                    .iter()
                    .map(|&id| state.node(id).expect("candidate nodes come from the state"))
                    .collect();
                place(item, cand.k, cand.p, &nodes)
            }
            None if eval.capacity_blocked => Decision::Rejected(RejectReason::CapacityExhausted),
            None => super::rejection(state, item),
        }
    }

    fn recovery_order(&self, state: &ClusterState) -> Vec<NodeId> {
        live_by_free(state).iter().map(|n| n.id).collect()
    }

    fn adaptive(&self) -> bool {
        true
    }
}

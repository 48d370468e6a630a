//! Workflow replay: the cost of sealing every packet of a DAG's transfers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::topology::{Dag, Edge};
use janus_core::ValidationError;

/// Per-flow goodput: 1.4 GB moved by 32 clients in 5.42 s.
pub const FLOW_BANDWIDTH_BYTES_PER_S: f64 = 1.4e9 / 5.42 / 32.0;
pub const PER_PACKET_COST_US: f64 = 6.0;
pub const INNER_MTU: usize = 1432;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacketCostModel {
    /// Enforcement cost per packet at each end of a transfer.
    pub per_packet_us: f64,
    pub inner_mtu: usize,
    pub bandwidth_bytes_per_s: f64,
    pub rtt_ms: f64,
}

impl Default for PacketCostModel {
    fn default() -> Self {
        Self {
            per_packet_us: PER_PACKET_COST_US,
            inner_mtu: INNER_MTU,
            bandwidth_bytes_per_s: FLOW_BANDWIDTH_BYTES_PER_S,
            rtt_ms: 0.5,
        }
    }
}

impl PacketCostModel {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.per_packet_us.is_finite() && self.per_packet_us >= 0.0) {
            return Err(ValidationError::new("replay.per_packet_us", "must be >= 0"));
        }
        if self.inner_mtu == 0 {
            return Err(ValidationError::new("replay.inner_mtu", "must be positive"));
        }
        if !(self.bandwidth_bytes_per_s.is_finite() && self.bandwidth_bytes_per_s > 0.0) {
            return Err(ValidationError::new("replay.bandwidth_bytes_per_s", "must be positive"));
        }
        if !(self.rtt_ms.is_finite() && self.rtt_ms >= 0.0) {
            return Err(ValidationError::new("replay.rtt_ms", "must be >= 0"));
        }
        Ok(())
    }

    pub fn packets(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.inner_mtu as u64)
    }

    /// Transfer time in ms, with and without enforcement.
    fn transfer_ms(&self, bytes: u64, enforced: bool) -> f64 {
        let wire = self.rtt_ms / 2.0 + bytes as f64 / self.bandwidth_bytes_per_s * 1e3;
        if enforced {
            wire + self.packets(bytes) as f64 * 2.0 * self.per_packet_us / 1e3
        } else {
            wire
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub baseline_ms: f64,
    pub enforced_ms: f64,
    pub overhead_pct: f64,
    pub packets: u64,
    pub bytes: u64,
}

/// Makespan of a DAG whose nodes start once all inbound transfers have
/// landed, with and without per-packet enforcement.
pub fn replay_dag_transfers(dag: &Dag, cost: &PacketCostModel) -> Result<ReplayReport, ValidationError> {
    dag.validate()?;
    cost.validate()?;
    let order = dag.topological_order();
    let n = dag.node_count();
    let mut out: Vec<Vec<&Edge>> = vec![Vec::new(); n];
    for e in &dag.edges {
        out[e.from].push(e);
    }
    let makespan = |enforced: bool| {
        let mut ready = vec![0.0f64; n];
        for &u in &order {
            for e in &out[u] {
                let t = ready[u] + cost.transfer_ms(e.bytes, enforced);
                ready[e.to] = ready[e.to].max(t);
            }
        }
        ready.into_iter().fold(0.0, f64::max)
    };
    let baseline_ms = makespan(false);
    let enforced_ms = makespan(true);
    let overhead_pct = if baseline_ms > 0.0 { (enforced_ms - baseline_ms) / baseline_ms * 100.0 } else { 0.0 };
    Ok(ReplayReport {
        baseline_ms,
        enforced_ms,
        overhead_pct,
        packets: dag.edges.iter().map(|e| cost.packets(e.bytes)).sum(),
        bytes: dag.total_bytes(),
    })
}

/// A Montage-shaped mosaic workflow with `tasks` tasks and `total_bytes`
/// spread over its edges. Stage sizes: project (p), diff (tasks - 2p - 6),
/// concat, bgmodel, background (p), imgtbl, add, shrink, jpeg, with
/// p = round(0.19 * tasks).
pub fn montage_like(tasks: usize, total_bytes: u64, seed: u64) -> Result<Dag, ValidationError> {
    let p = ((tasks as f64) * 0.19).round() as usize;
    if tasks < 16 || p < 3 || tasks < 2 * p + 7 {
        return Err(ValidationError::new("tasks", "too few tasks for a mosaic workflow"));
    }
    let n_diff = tasks - 2 * p - 6;
    let project = 0..p;
    let diff = p..p + n_diff;
    let concat = diff.end;
    let bgmodel = concat + 1;
    let background = bgmodel + 1..bgmodel + 1 + p;
    let imgtbl = background.end;
    let add = imgtbl + 1;
    let shrink = add + 1;
    let jpeg = shrink + 1;
    debug_assert_eq!(jpeg + 1, tasks);

    let mut pairs = Vec::new();
    'outer: for gap in 1..p {
        for i in 0..p - gap {
            if pairs.len() == n_diff {
                break 'outer;
            }
            pairs.push((i, i + gap));
        }
    }
    if pairs.len() < n_diff {
        return Err(ValidationError::new("tasks", "not enough overlapping image pairs"));
    }

    let mut links: Vec<(usize, usize)> = Vec::new();
    for (k, (a, b)) in diff.clone().zip(pairs) {
        links.push((project.start + a, k));
        links.push((project.start + b, k));
    }
    for k in diff {
        links.push((k, concat));
    }
    links.push((concat, bgmodel));
    for (i, bg) in background.clone().enumerate() {
        links.push((bgmodel, bg));
        links.push((project.start + i, bg));
        links.push((bg, imgtbl));
        links.push((bg, add));
    }
    links.push((imgtbl, add));
    links.push((add, shrink));
    links.push((shrink, jpeg));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = links.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
    let sum: f64 = weights.iter().sum();
    let mut edges: Vec<Edge> = links
        .iter()
        .zip(&weights)
        .map(|(&(from, to), w)| Edge { from, to, bytes: (w / sum * total_bytes as f64).floor() as u64 })
        .collect();
    let assigned: u64 = edges.iter().map(|e| e.bytes).sum();
    edges[0].bytes += total_bytes - assigned;
    Ok(Dag::new(tasks, edges))
}

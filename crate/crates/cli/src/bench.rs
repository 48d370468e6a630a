//! In-process microbenchmarks: handshake latency and per-packet cost.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use janus_core::clock::WallClock;
use janus_core::cluster::ClusterBuilder;
use janus_core::dataplane::{CostSummary, DataPlane, DataPlaneConfig, FlowKeyTable, SessionKeyEntry, DEFAULT_REKEY_THRESHOLD};
use janus_scale::Percentiles;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub handshakes: usize,
    pub packets: usize,
    pub size: usize,
    pub lanes: u16,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub handshakes: usize,
    pub handshake_ms: Percentiles,
    pub packets: usize,
    pub size: usize,
    pub seal_mpps: f64,
    pub open_mpps: f64,
    pub costs: CostSummary,
}

pub fn run(cfg: BenchConfig) -> CliResult<BenchReport> {
    if cfg.handshakes == 0 || cfg.packets == 0 || cfg.size == 0 || cfg.lanes == 0 {
        return Err(CliError::validation("bench counts must be positive"));
    }
    let clock = Arc::new(WallClock::new());
    let cluster = ClusterBuilder::with_nodes(2, clock.clone()).seed(cfg.seed).build();
    let mut samples = Vec::with_capacity(cfg.handshakes);
    let mut last = None;
    for _ in 0..cfg.handshakes {
        let t0 = Instant::now();
        let run = cluster.handshake_direct(0, 1, &mut |_, _| {});
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
        if !run.keys_agree() {
            return Err(CliError::Assertion(format!("handshake failed: {:?}", run.initiator.err())));
        }
        last = Some(run);
    }
    let run = last.expect("at least one handshake");
    let dp_cfg = DataPlaneConfig { lanes: cfg.lanes, ..Default::default() };
    if cfg.size > dp_cfg.inner_budget() {
        return Err(CliError::validation(format!("size exceeds the {} byte budget", dp_cfg.inner_budget())));
    }
    let plane = |i: usize, s| {
        let keys = Arc::new(FlowKeyTable::new());
        keys.install(Arc::new(SessionKeyEntry::from_session(s, DEFAULT_REKEY_THRESHOLD)));
        DataPlane::new(cluster.node(i).store.clone(), keys, dp_cfg, clock.clone())
    };
    let a = plane(0, run.initiator.as_ref().expect("agreed"));
    let b = plane(1, run.responder.as_ref().expect("agreed"));
    let (to_b, from_a) = (cluster.node(1).spec.address, cluster.node(0).spec.address);
    let payload = vec![0xa5u8; cfg.size];

    let t0 = Instant::now();
    let frames: Vec<Vec<u8>> = (0..cfg.packets)
        .map(|i| a.seal(&to_b, &payload, (i % cfg.lanes as usize) as u16).map(|s| s.frame))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Assertion(e.to_string()))?;
    let seal_s = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    for f in &frames {
        b.open(f, &from_a).map_err(|e| CliError::Assertion(e.to_string()))?;
    }
    let open_s = t0.elapsed().as_secs_f64();
    Ok(BenchReport {
        handshakes: cfg.handshakes,
        handshake_ms: Percentiles::from_samples(&mut samples),
        packets: cfg.packets,
        size: cfg.size,
        seal_mpps: cfg.packets as f64 / seal_s / 1e6,
        open_mpps: cfg.packets as f64 / open_s / 1e6,
        costs: a.costs(),
    })
}

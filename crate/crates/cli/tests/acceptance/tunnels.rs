//! Two in-process tunnels on loopback, optionally through the relay.

use std::collections::HashSet;
use std::net::SocketAddrV4;
use std::sync::Arc;
use std::time::Duration;

use janus_cli::adversary::{Direction, Relay};
use janus_cli::deployment::{Deployment, NodePlan};
use janus_cli::workload::{drain, transfer, App, TransferConfig, TransferReport};
use janus_core::clock::{Clock, WallClock};
use janus_core::cluster::{free_loopback_addr, mesh_edges};
use janus_core::dataplane::tunnel::{run_tunnel, Tunnel, TunnelConfig};
use janus_core::dataplane::HEADER_LEN;

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

struct Node {
    tunnel: Tunnel,
    app: App,
    net: SocketAddrV4,
}

struct Pair {
    deployment: Deployment,
    nodes: Vec<Node>,
    relay: Option<Relay>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl Pair {
    fn start(seed: u64, via_relay: bool) -> Result<Self, String> {
        let addrs = [free_loopback_addr().map_err(err)?, free_loopback_addr().map_err(err)?];
        let deployment = Deployment::new(seed, vec![NodePlan::new("a", addrs[0]), NodePlan::new("b", addrs[1])]);
        let relay = if via_relay { Some(Relay::start(addrs[0], addrs[1]).map_err(err)?) } else { None };
        let bodies = deployment.bodies(&mesh_edges(2), 1);
        let clock: Arc<dyn Clock> = Arc::new(WallClock::new());
        let mut nodes = Vec::new();
        for (i, body) in bodies.into_iter().enumerate() {
            let identity = deployment.identity(i);
            let ctx = Arc::new(identity.context(clock.clone()).map_err(err)?);
            let store = Arc::new(identity.policy_store(&deployment.sign(body)).map_err(err)?);
            let plain = free_loopback_addr().map_err(err)?;
            let app = App::bind(plain).map_err(err)?;
            let mut cfg = TunnelConfig::new(addrs[i], plain);
            cfg.app = Some(app.local_addr().into());
            if let Some(r) = &relay {
                let (peer, via) = if i == 0 { (addrs[1], r.side_a()) } else { (addrs[0], r.side_b()) };
                cfg.routes.insert(peer, via);
            }
            let tunnel = run_tunnel(cfg, ctx, store, clock.clone()).map_err(err)?;
            nodes.push(Node { tunnel, app, net: addrs[i] });
        }
        let pair = Self { deployment, nodes, relay };
        let (a, b) = (&pair.nodes[0], &pair.nodes[1]);
        if !a.app.warm_up(&b.app, &b.net, Duration::from_secs(5)) || !b.app.warm_up(&a.app, &a.net, Duration::from_secs(5)) {
            return Err("tunnels did not come up".into());
        }
        drain(&a.app, Duration::from_millis(100));
        drain(&b.app, Duration::from_millis(100));
        Ok(pair)
    }

    fn roll_to(&self, i: usize, epoch: u64) -> Result<u64, String> {
        let body = self.deployment.bodies(&mesh_edges(2), epoch).swap_remove(i);
        self.nodes[i].tunnel.roll(&self.deployment.sign(body)).map_err(err)
    }

    fn transfer(&self, midway: Option<&mut dyn FnMut()>) -> Result<TransferReport, String> {
        let (a, b) = (&self.nodes[0], &self.nodes[1]);
        transfer(&a.app, &b.app, b.net, a.net, TransferConfig::default(), midway).map_err(err)
    }

    fn shutdown(self) {
        for n in self.nodes {
            n.tunnel.shutdown();
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// 10 MB transfers with and without a rollover at the halfway mark,
/// interleaved on one tunnel pair so both arms see the same conditions.
pub fn rollover_penalty() -> Result<Verdict, String> {
    const RUNS: u64 = 15;
    // Longer than the grace deadline, so every rollover starts from a
    // flushed previous epoch.
    const SETTLE: Duration = Duration::from_millis(700);
    let total = TransferConfig::default().total_bytes;
    let pair = Pair::start(0x4c, false)?;
    let (mut base, mut rolled, mut gaps) = (Vec::new(), Vec::new(), Vec::new());
    let mut lossless = true;
    let mut epochs_ok = true;
    for k in 0..RUNS {
        let r = pair.transfer(None)?;
        lossless &= r.complete && r.bytes_delivered == total && r.corrupt == 0;
        base.push(r.elapsed_ms);

        let epoch = 2 + k;
        let mut roll_result = Ok(());
        let mut midway = || {
            roll_result = pair.roll_to(1, epoch).and_then(|_| pair.roll_to(0, epoch)).map(|_| ());
        };
        let r = pair.transfer(Some(&mut midway))?;
        roll_result?;
        lossless &= r.complete && r.bytes_delivered == total && r.corrupt == 0;
        epochs_ok &= pair.nodes.iter().all(|n| n.tunnel.stats().active_epoch == epoch);
        rolled.push(r.elapsed_ms);
        gaps.push(r.max_ack_gap_ms);
        std::thread::sleep(SETTLE);
    }
    let flushed = pair.nodes.iter().all(|n| n.tunnel.stats().epoch.forced_resets == 0);
    pair.shutdown();
    let (b, r, g) = (median(base.clone()), median(rolled.clone()), median(gaps));
    let penalty = (r / b - 1.0) * 100.0;
    Ok(Verdict {
        passed: lossless && epochs_ok && penalty < 5.0,
        detail: format!(
            "{RUNS} runs each: rollover median {r:.0} ms vs {b:.0} ms, penalty {penalty:.2}%, median stall {g:.1} ms, lossless {lossless}, epochs advanced {epochs_ok}, no forced resets {flushed}; baseline {:.0}..{:.0} ms",
            base.iter().cloned().fold(f64::INFINITY, f64::min),
            base.iter().cloned().fold(0.0, f64::max),
        ),
    })
}

const PHRASE: &str = "attack at dawn; the quick brown fox jumps over the lazy dog; ";

fn plaintext(i: u32) -> Vec<u8> {
    let mut p = format!("PLAINTEXT-{i:06}|").into_bytes();
    while p.len() < 1000 {
        p.extend_from_slice(PHRASE.as_bytes());
    }
    p.truncate(1000);
    p
}

/// Frames captured between the tunnels carry no plaintext and look random.
pub fn capture_check() -> Result<Verdict, String> {
    const PACKETS: u32 = 2_000;
    const WINDOW: usize = 8;
    let pair = Pair::start(0x11, true)?;
    let relay = pair.relay.as_ref().expect("relayed pair");
    let (a, b) = (&pair.nodes[0], &pair.nodes[1]);
    relay.capture(Some(Direction::AToB));
    let rx = b.app.try_clone().map_err(err)?;
    let receiver = std::thread::spawn(move || drain(&rx, Duration::from_millis(500)));
    let mut windows = HashSet::new();
    for i in 0..PACKETS {
        let p = plaintext(i);
        windows.extend(p.windows(WINDOW).map(<[u8]>::to_vec));
        a.app.send(&b.net, &p).map_err(err)?;
        if i % 64 == 63 {
            std::thread::sleep(Duration::from_millis(2));
        }
    }
    let delivered = receiver.join().map_err(|_| "receiver panicked")?;
    relay.capture(None);
    let frames: Vec<Vec<u8>> = relay.take_captured().into_iter().map(|(_, f)| f).collect();

    let leaks = frames
        .iter()
        .filter(|f| f.windows(WINDOW).any(|w| windows.contains(w)))
        .count();
    let (mut ones, mut bits) = (0u64, 0u64);
    for f in &frames {
        for byte in &f[HEADER_LEN..] {
            ones += u64::from(byte.count_ones());
            bits += 8;
        }
    }
    let zeros = bits - ones;
    let bias = (ones as f64 - zeros as f64).abs() / bits.max(1) as f64;
    pair.shutdown();
    Ok(Verdict {
        passed: delivered as u32 >= PACKETS * 9 / 10 && leaks == 0 && bias < 0.01,
        detail: format!(
            "{} frames captured, {delivered} delivered, {leaks} frames containing an {WINDOW}-byte plaintext window, monobit bias {:.4}%",
            frames.len(),
            bias * 100.0
        ),
    })
}

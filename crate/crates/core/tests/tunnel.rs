use std::collections::HashSet;
use std::io;
use std::net::{SocketAddr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use janus_core::clock::{Clock, WallClock};
use janus_core::cluster::{free_loopback_addr, Cluster, ClusterBuilder, NodeSpec};
use janus_core::dataplane::tunnel::{decode_shim, encode_shim, run_tunnel, Tunnel, TunnelConfig};
use janus_core::dataplane::{DataPlaneConfig, FrameHeader};
use janus_core::epoch::PreviousEpoch;
use janus_core::policy::PolicyDocument;
use serde_json::json;

struct App {
    sock: UdpSocket,
    tunnel: Tunnel,
}

impl App {
    fn send(&self, dest: SocketAddrV4, payload: &[u8]) {
        self.sock
            .send_to(&encode_shim(&dest, payload), self.tunnel.plain_addr())
            .unwrap();
    }

    fn recv(&self, timeout: Duration) -> Option<(SocketAddrV4, Vec<u8>)> {
        self.sock.set_read_timeout(Some(timeout)).unwrap();
        let mut buf = [0u8; 2048];
        let n = self.sock.recv(&mut buf).ok()?;
        let (src, p) = decode_shim(&buf[..n])?;
        Some((src, p.to_vec()))
    }

    /// Sends until the matching reply arrives; the first packets of a
    /// flow are dropped while its handshake runs.
    fn exchange(&self, dest: SocketAddrV4, payload: &[u8]) -> Vec<u8> {
        let t0 = Instant::now();
        while t0.elapsed() < Duration::from_secs(10) {
            self.send(dest, payload);
            let wait = Instant::now();
            while wait.elapsed() < Duration::from_millis(50) {
                match self.recv(Duration::from_millis(50)) {
                    Some((src, p)) if src == dest && p == payload => return p,
                    Some(_) => continue,
                    None => break,
                }
            }
        }
        panic!("no reply from {dest}");
    }

    fn echo(&self) -> Echo {
        let sock = self.sock.try_clone().unwrap();
        let plain = self.tunnel.plain_addr();
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            sock.set_read_timeout(Some(Duration::from_millis(10))).unwrap();
            let mut buf = [0u8; 2048];
            while !flag.load(Ordering::Relaxed) {
                if let Ok(n) = sock.recv(&mut buf) {
                    if let Some((src, p)) = decode_shim(&buf[..n]) {
                        let _ = sock.send_to(&encode_shim(&src, p), plain);
                    }
                }
            }
        });
        Echo { stop, handle: Some(handle) }
    }
}

struct Echo {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Echo {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn cluster(n: usize) -> Cluster {
    let specs = (0..n)
        .map(|i| NodeSpec::named(&format!("t{i}"), free_loopback_addr().unwrap()))
        .collect();
    let clock: Arc<dyn Clock> = Arc::new(WallClock::new());
    ClusterBuilder::new(specs, clock).seed(3).build()
}

fn start(c: &Cluster, i: usize, tweak: impl FnOnce(&mut TunnelConfig)) -> App {
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let mut cfg = TunnelConfig::new(c.node(i).spec.address, "127.0.0.1:0".parse().unwrap());
    cfg.app = Some(sock.local_addr().unwrap());
    tweak(&mut cfg);
    let node = c.node(i);
    let tunnel = run_tunnel(cfg, node.ctx.clone(), node.store.clone(), c.clock.clone()).unwrap();
    App { sock, tunnel }
}

fn v4(a: SocketAddr) -> SocketAddrV4 {
    match a {
        SocketAddr::V4(a) => a,
        SocketAddr::V6(_) => unreachable!(),
    }
}

#[test]
fn echo_round_trip_and_deny_by_default() {
    let c = cluster(2);
    let a = start(&c, 0, |_| {});
    let b = start(&c, 1, |_| {});
    let _echo = b.echo();
    let peer = c.node(1).spec.address;
    assert_eq!(a.exchange(peer, b"hello"), b"hello");
    for i in 0..50u32 {
        assert_eq!(a.exchange(peer, &i.to_be_bytes()), i.to_be_bytes());
    }
    let stranger = free_loopback_addr().unwrap();
    let listener = UdpSocket::bind(stranger).unwrap();
    listener.set_read_timeout(Some(Duration::from_millis(200))).unwrap();
    for _ in 0..20 {
        a.send(stranger, b"leak?");
    }
    let mut buf = [0u8; 64];
    assert!(listener.recv(&mut buf).is_err(), "bytes reached an unauthorized destination");
    let sa = a.tunnel.stats();
    assert_eq!(sa.denied, 20);
    assert!(!sa.tx_bytes_by_dest.contains_key(&stranger.to_string()));
    assert_eq!(sa.handshakes_completed, 1);
    assert_eq!(b.tunnel.stats().handshakes_completed, 1);
    assert_eq!(sa.auth_failed + sa.replay + sa.unknown_key, 0);
    let csv = a.tunnel.control(&json!({"cmd": "costs"}))["csv"].as_str().unwrap().to_string();
    assert!(csv.starts_with("component,p50_ns,p99_ns,count"));
}

#[test]
fn rekey_rotates_once_per_threshold_crossing() {
    let c = cluster(2);
    let threshold = 1u64 << 10;
    let a = start(&c, 0, |cfg| {
        cfg.dataplane = DataPlaneConfig {
            rekey_threshold: threshold,
            ..DataPlaneConfig::default()
        };
    });
    let b = start(&c, 1, |_| {});
    let _echo = b.echo();
    let peer = c.node(1).spec.address;
    for i in 0..(threshold as u32 * 5 / 2) {
        assert_eq!(a.exchange(peer, &i.to_be_bytes()), i.to_be_bytes());
    }
    let key_ids: HashSet<u32> = a
        .tunnel
        .handshakes()
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.key_id.unwrap())
        .collect();
    let s = a.tunnel.stats();
    assert_eq!(s.rekeys_triggered, 2, "{s:?}");
    assert_eq!(s.handshakes_completed, 3);
    assert_eq!(key_ids.len(), 3);
    assert_eq!(s.replay, 0);
    assert_eq!(b.tunnel.stats().replay, 0);
}

#[test]
fn rollover_keeps_the_stream_and_flushes_the_old_epoch() {
    let c = cluster(2);
    let a = start(&c, 0, |_| {});
    let b = start(&c, 1, |_| {});
    let _echo = b.echo();
    let peer = c.node(1).spec.address;
    for i in 0..20u32 {
        assert_eq!(a.exchange(peer, &i.to_be_bytes()), i.to_be_bytes());
    }
    assert_eq!(a.tunnel.roll(&c.bundle_for(0, 2)).unwrap(), 2);
    assert!(a.tunnel.roll(&c.bundle_for(0, 1)).is_err());
    assert_eq!(a.tunnel.control(&json!({"cmd": "stats"}))["stats"]["active_epoch"], 2);

    let dir = std::env::temp_dir().join(format!("janus-tunnel-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("b2.json");
    std::fs::write(&path, PolicyDocument::from_bundle(&c.bundle_for(1, 2)).to_json_pretty()).unwrap();
    let reply = b.tunnel.control(&json!({"cmd": "roll", "policy_path": path}));
    assert_eq!(reply, json!({"ok": true, "active_epoch": 2}));
    let reply = b.tunnel.control(&json!({"cmd": "roll", "policy_path": path}));
    assert_eq!(reply["ok"], false);

    for i in 0..20u32 {
        assert_eq!(a.exchange(peer, &i.to_be_bytes()), i.to_be_bytes());
    }
    std::thread::sleep(Duration::from_millis(150));
    for t in [&a.tunnel, &b.tunnel] {
        let s = t.stats();
        assert_eq!(s.active_epoch, 2);
        assert_eq!(s.epoch.previous, PreviousEpoch::Flushed { epoch: 1 });
        assert!(s.epoch.destroyed_total >= 1);
        assert_eq!(s.live_keys, 1);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn restarted_peer_gets_a_fresh_session() {
    let c = cluster(3);
    let a = start(&c, 0, |_| {});
    let b = start(&c, 1, |_| {});
    let d = start(&c, 2, |_| {});
    let _echo_d = d.echo();
    let (pb, pd) = (c.node(1).spec.address, c.node(2).spec.address);
    {
        let _echo_b = b.echo();
        assert_eq!(a.exchange(pb, b"one"), b"one");
        assert_eq!(a.exchange(pd, b"one"), b"one");
    }
    drop(b);
    let b = start(&c, 1, |_| {});
    let _echo_b = b.echo();
    // a still holds the old key; b answers with UnknownKey until a rekeys
    a.send(pb, b"lost");
    std::thread::sleep(Duration::from_millis(50));
    assert!(b.tunnel.stats().unknown_key >= 1);
    // b initiates towards a, which replaces a's key for the flow
    let pa = c.node(0).spec.address;
    let t0 = Instant::now();
    let got = loop {
        assert!(t0.elapsed() < Duration::from_secs(10));
        b.send(pa, b"back");
        if let Some(m) = a.recv(Duration::from_millis(50)) {
            break m;
        }
    };
    assert_eq!(got, (pb, b"back".to_vec()));
    assert_eq!(a.exchange(pb, b"two"), b"two");
    assert_eq!(a.exchange(pd, b"two"), b"two");
    assert_eq!(d.tunnel.stats().handshakes_completed, 1);
}

/// Forwards UDP frames and handshake streams between `a` and `b`,
/// recording every frame that `a` sends.
fn relay(a_net: SocketAddrV4, b_net: SocketAddrV4) -> (SocketAddrV4, Arc<parking_lot::Mutex<Vec<Vec<u8>>>>) {
    let udp = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = v4(udp.local_addr().unwrap());
    let tcp = TcpListener::bind(addr).unwrap();
    let frames = Arc::new(parking_lot::Mutex::new(Vec::new()));
    let log = frames.clone();
    std::thread::spawn(move || {
        let mut buf = [0u8; 2048];
        while let Ok((n, from)) = udp.recv_from(&mut buf) {
            if from == SocketAddr::V4(a_net) {
                log.lock().push(buf[..n].to_vec());
                let _ = udp.send_to(&buf[..n], b_net);
            } else {
                let _ = udp.send_to(&buf[..n], a_net);
            }
        }
    });
    std::thread::spawn(move || {
        for inbound in tcp.incoming().flatten() {
            let outbound = TcpStream::connect(b_net).unwrap();
            let (mut r1, mut w1) = (inbound.try_clone().unwrap(), outbound.try_clone().unwrap());
            let (mut r2, mut w2) = (outbound, inbound);
            std::thread::spawn(move || io::copy(&mut r1, &mut w1));
            std::thread::spawn(move || io::copy(&mut r2, &mut w2));
        }
    });
    (addr, frames)
}

#[test]
fn frames_on_the_wire_never_repeat_a_nonce() {
    let c = cluster(2);
    let (a_addr, b_addr) = (c.node(0).spec.address, c.node(1).spec.address);
    let (via, frames) = relay(a_addr, b_addr);
    let a = start(&c, 0, |cfg| {
        cfg.routes.insert(b_addr, via);
        cfg.dataplane.lanes = 4;
        cfg.dataplane.rekey_threshold = 1 << 7;
    });
    let b = start(&c, 1, |cfg| {
        cfg.routes.insert(a_addr, via);
    });
    let _echo = b.echo();
    for i in 0..1500u32 {
        assert_eq!(a.exchange(b_addr, &i.to_be_bytes()), i.to_be_bytes());
    }
    let frames = frames.lock();
    let mut seen = HashSet::new();
    let mut lanes = HashSet::new();
    for f in frames.iter() {
        let h = FrameHeader::parse(f).unwrap();
        assert!(seen.insert((h.key_id, h.lane, h.counter)), "nonce reuse {h:?}");
        lanes.insert(h.lane);
    }
    assert!(frames.len() >= 1500);
    assert!(lanes.len() > 1);
    assert!(a.tunnel.stats().rekeys_triggered >= 2);
}

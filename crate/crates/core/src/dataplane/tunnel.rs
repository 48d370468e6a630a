//! User-space UDP tunnel.
//!
//! Two UDP sockets: the plaintext side, where local applications send
//! datagrams prefixed with a 6-byte destination shim (IPv4 address and
//! port, big-endian), and the network side, where sealed frames travel.
//! MAKE handshakes run over TCP on the network address. Inbound payloads
//! are handed to the application with the same shim naming the source.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CostSummary, DataPlane, DataPlaneConfig, FlowKeyTable, OpenError, SealError, SessionKeyEntry};
use crate::clock::Clock;
use crate::epoch::{EpochConfig, EpochError, EpochLifecycle, EpochStats, QuiescenceTracker};
use crate::make::{run_initiator, run_responder, AttestationContext, HandshakeConfig, HandshakeError, SessionSecret, TcpTransport};
use crate::policy::{PolicyBundle, PolicyDocument, PolicyError, PolicyStore};

pub const SHIM_LEN: usize = 6;
const RECV_TIMEOUT: Duration = Duration::from_millis(5);
const MAX_HANDSHAKE_RECORDS: usize = 1024;

#[derive(Debug, Clone)]
pub struct TunnelConfig {
    /// Network side: UDP frames and the TCP handshake listener.
    pub bind: SocketAddrV4,
    /// Plaintext side.
    pub plain: SocketAddrV4,
    /// Where inbound payloads go. Defaults to the last plaintext sender.
    pub app: Option<SocketAddr>,
    /// Next hop per policy address, for peers reached through a relay.
    pub routes: HashMap<SocketAddrV4, SocketAddrV4>,
    pub dataplane: DataPlaneConfig,
    pub handshake: HandshakeConfig,
    pub epoch: EpochConfig,
    /// Line-delimited JSON control socket.
    pub control: Option<PathBuf>,
    pub poll_interval: Duration,
    /// Minimum spacing between attempts for a flow after a failure.
    pub retry_backoff: Duration,
}

impl TunnelConfig {
    pub fn new(bind: SocketAddrV4, plain: SocketAddrV4) -> Self {
        Self {
            bind,
            plain,
            app: None,
            routes: HashMap::new(),
            dataplane: DataPlaneConfig::default(),
            handshake: HandshakeConfig::default(),
            epoch: EpochConfig::default(),
            control: None,
            poll_interval: Duration::from_millis(10),
            retry_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RollError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Epoch(#[from] EpochError),
    #[error("{0}")]
    Document(String),
}

#[derive(Debug, Default)]
struct Counters {
    plain_rx: AtomicU64,
    sealed: AtomicU64,
    sent_bytes: AtomicU64,
    denied: AtomicU64,
    key_pending: AtomicU64,
    seal_errors: AtomicU64,
    net_rx: AtomicU64,
    opened: AtomicU64,
    delivered_bytes: AtomicU64,
    auth_failed: AtomicU64,
    unknown_key: AtomicU64,
    epoch_too_old: AtomicU64,
    replay: AtomicU64,
    malformed: AtomicU64,
    handshakes_initiated: AtomicU64,
    handshakes_completed: AtomicU64,
    handshakes_failed: AtomicU64,
    rekeys_triggered: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HandshakeRecord {
    pub role: &'static str,
    pub peer: Option<String>,
    pub epoch: u64,
    pub key_id: Option<u32>,
    pub error: Option<String>,
    /// Abort code sent or received, e.g. `MeasurementMismatch`.
    pub reason: Option<String>,
    pub elapsed_ms: u64,
    pub rekey: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunnelStats {
    pub active_epoch: u64,
    pub plain_rx: u64,
    pub sealed: u64,
    pub sent_bytes: u64,
    pub denied: u64,
    pub key_pending: u64,
    pub seal_errors: u64,
    pub net_rx: u64,
    pub opened: u64,
    pub delivered_bytes: u64,
    pub auth_failed: u64,
    pub unknown_key: u64,
    pub epoch_too_old: u64,
    pub replay: u64,
    pub malformed: u64,
    pub handshakes_initiated: u64,
    pub handshakes_completed: u64,
    pub handshakes_failed: u64,
    pub rekeys_triggered: u64,
    pub live_keys: usize,
    /// Bytes written to the network socket, by policy destination.
    pub tx_bytes_by_dest: BTreeMap<String, u64>,
    pub epoch: EpochStats,
}

#[derive(Debug, Default)]
struct Attempt {
    in_flight: bool,
    last_failure: Option<Instant>,
}

struct Shared {
    cfg: TunnelConfig,
    ctx: Arc<AttestationContext>,
    store: Arc<PolicyStore>,
    net: UdpSocket,
    plain: UdpSocket,
    dp: DataPlane,
    life: EpochLifecycle,
    tracker: Arc<QuiescenceTracker>,
    reverse_routes: HashMap<SocketAddrV4, SocketAddrV4>,
    app: Mutex<Option<SocketAddr>>,
    attempts: Mutex<HashMap<(SocketAddrV4, u64), Attempt>>,
    stalled: Box<[AtomicBool]>,
    stop: AtomicBool,
    counters: Counters,
    tx_by_dest: Mutex<HashMap<SocketAddrV4, u64>>,
    records: Mutex<VecDeque<HandshakeRecord>>,
}

/// A running tunnel. Dropping it stops every worker.
pub struct Tunnel {
    shared: Arc<Shared>,
    net_addr: SocketAddrV4,
    plain_addr: SocketAddrV4,
    threads: Vec<JoinHandle<()>>,
}

fn v4(addr: SocketAddr) -> Option<SocketAddrV4> {
    match addr {
        SocketAddr::V4(a) => Some(a),
        SocketAddr::V6(_) => None,
    }
}

fn timed_out(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

pub fn encode_shim(addr: &SocketAddrV4, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(SHIM_LEN + payload.len());
    out.extend_from_slice(&addr.ip().octets());
    out.extend_from_slice(&addr.port().to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn decode_shim(datagram: &[u8]) -> Option<(SocketAddrV4, &[u8])> {
    if datagram.len() < SHIM_LEN {
        return None;
    }
    let ip: [u8; 4] = datagram[..4].try_into().ok()?;
    let port = u16::from_be_bytes([datagram[4], datagram[5]]);
    Some((SocketAddrV4::new(ip.into(), port), &datagram[SHIM_LEN..]))
}

/// Binds the sockets and starts the workers. Lanes are numbered
/// `0..lanes` for the outbound workers and `lanes..2*lanes` for the
/// inbound ones; each owns one quiescence counter.
pub fn run_tunnel(
    cfg: TunnelConfig,
    ctx: Arc<AttestationContext>,
    store: Arc<PolicyStore>,
    clock: Arc<dyn Clock>,
) -> io::Result<Tunnel> {
    let lanes = cfg.dataplane.lanes.max(1);
    if lanes as usize > super::MAX_LANES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "too many lanes"));
    }
    let net = UdpSocket::bind(cfg.bind)?;
    let net_addr = v4(net.local_addr()?).expect("bound to v4");
    let listener = TcpListener::bind(net_addr)?;
    let plain = UdpSocket::bind(cfg.plain)?;
    let plain_addr = v4(plain.local_addr()?).expect("bound to v4");
    net.set_read_timeout(Some(RECV_TIMEOUT))?;
    plain.set_read_timeout(Some(RECV_TIMEOUT))?;
    listener.set_nonblocking(true)?;
    let control = match &cfg.control {
        Some(path) => {
            let _ = std::fs::remove_file(path);
            let l = UnixListener::bind(path)?;
            l.set_nonblocking(true)?;
            Some(l)
        }
        None => None,
    };

    let keys = Arc::new(FlowKeyTable::new());
    let tracker = Arc::new(QuiescenceTracker::new(lanes * 2));
    let dp_cfg = DataPlaneConfig { lanes, ..cfg.dataplane };
    let dp = DataPlane::new(store.clone(), keys.clone(), dp_cfg, clock.clone());
    let life = EpochLifecycle::new(store.epoch(), keys, tracker.clone(), clock, cfg.epoch);
    let reverse_routes = cfg.routes.iter().map(|(peer, via)| (*via, *peer)).collect();
    let shared = Arc::new(Shared {
        app: Mutex::new(cfg.app),
        cfg,
        ctx,
        store,
        net,
        plain,
        dp,
        life,
        tracker,
        reverse_routes,
        attempts: Mutex::new(HashMap::new()),
        stalled: (0..lanes * 2).map(|_| AtomicBool::new(false)).collect(),
        stop: AtomicBool::new(false),
        counters: Counters::default(),
        tx_by_dest: Mutex::new(HashMap::new()),
        records: Mutex::new(VecDeque::new()),
    });

    let mut threads = Vec::new();
    for lane in 0..lanes {
        let s = shared.clone();
        threads.push(spawn(format!("out-{lane}"), move || s.outbound(lane))?);
        let s = shared.clone();
        threads.push(spawn(format!("in-{lane}"), move || s.inbound(lanes + lane))?);
    }
    let s = shared.clone();
    threads.push(spawn("handshake".into(), move || s.accept_handshakes(listener))?);
    let s = shared.clone();
    threads.push(spawn("epoch".into(), move || s.coordinate())?);
    if let Some(l) = control {
        let s = shared.clone();
        threads.push(spawn("control".into(), move || s.serve_control(l))?);
    }
    log::info!("tunnel up: network {net_addr}, plaintext {plain_addr}, {lanes} lanes");
    Ok(Tunnel {
        shared,
        net_addr,
        plain_addr,
        threads,
    })
}

fn spawn(name: String, f: impl FnOnce() + Send + 'static) -> io::Result<JoinHandle<()>> {
    thread::Builder::new().name(name).spawn(f)
}

impl Shared {
    fn stopping(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    fn route(&self, peer: &SocketAddrV4) -> SocketAddrV4 {
        self.cfg.routes.get(peer).copied().unwrap_or(*peer)
    }

    /// Parks the calling worker while its lane is stalled; returns false
    /// once the tunnel is stopping.
    fn lane_gate(&self, slot: u16) -> bool {
        while self.stalled[slot as usize].load(Ordering::Acquire) {
            if self.stopping() {
                return false;
            }
            thread::sleep(Duration::from_millis(1));
        }
        self.tracker.observe(slot);
        !self.stopping()
    }

    fn outbound(self: Arc<Self>, lane: u16) {
        let mut buf = vec![0u8; 65536];
        while self.lane_gate(lane) {
            let (n, from) = match self.plain.recv_from(&mut buf) {
                Ok(v) => v,
                Err(e) if timed_out(&e) => continue,
                Err(e) => {
                    log::warn!("plaintext socket: {e}");
                    continue;
                }
            };
            bump(&self.counters.plain_rx);
            if self.cfg.app.is_none() {
                *self.app.lock() = Some(from);
            }
            let Some((dest, payload)) = decode_shim(&buf[..n]) else {
                bump(&self.counters.seal_errors);
                continue;
            };
            match self.dp.seal(&dest, payload, lane) {
                Ok(sealed) => {
                    if sealed.rekey {
                        bump(&self.counters.rekeys_triggered);
                        self.start_handshake(dest, self.store.epoch(), true);
                    }
                    match self.net.send_to(&sealed.frame, self.route(&dest)) {
                        Ok(sent) => {
                            bump(&self.counters.sealed);
                            self.counters.sent_bytes.fetch_add(sent as u64, Ordering::Relaxed);
                            *self.tx_by_dest.lock().entry(dest).or_default() += sent as u64;
                        }
                        Err(e) => log::debug!("send to {dest}: {e}"),
                    }
                }
                Err(SealError::Deny) => bump(&self.counters.denied),
                Err(SealError::KeyPending { peer, epoch }) => {
                    bump(&self.counters.key_pending);
                    self.start_handshake(peer, epoch, false);
                }
                Err(SealError::CounterExhausted) => {
                    bump(&self.counters.seal_errors);
                    self.start_handshake(dest, self.store.epoch(), true);
                }
                Err(_) => bump(&self.counters.seal_errors),
            }
        }
    }

    fn inbound(&self, slot: u16) {
        let mut buf = vec![0u8; 65536];
        while self.lane_gate(slot) {
            let (n, from) = match self.net.recv_from(&mut buf) {
                Ok(v) => v,
                Err(e) if timed_out(&e) => continue,
                Err(e) => {
                    log::warn!("network socket: {e}");
                    continue;
                }
            };
            bump(&self.counters.net_rx);
            let Some(from) = v4(from) else { continue };
            let source = self.reverse_routes.get(&from).copied().unwrap_or(from);
            match self.dp.open(&buf[..n], &source) {
                Ok(inner) => {
                    bump(&self.counters.opened);
                    let app = *self.app.lock();
                    if let Some(app) = app {
                        if self.plain.send_to(&encode_shim(&source, &inner), app).is_ok() {
                            self.counters.delivered_bytes.fetch_add(inner.len() as u64, Ordering::Relaxed);
                        }
                    }
                }
                Err(e) => bump(match e {
                    OpenError::AuthFailed => &self.counters.auth_failed,
                    OpenError::UnknownKey => &self.counters.unknown_key,
                    OpenError::EpochTooOld => &self.counters.epoch_too_old,
                    OpenError::ReplayDetected => &self.counters.replay,
                    OpenError::Malformed => &self.counters.malformed,
                }),
            }
        }
    }

    /// Starts an initiator handshake towards `peer` unless one is already
    /// running or the last one failed too recently.
    fn start_handshake(self: &Arc<Self>, peer: SocketAddrV4, epoch: u64, rekey: bool) {
        {
            let mut attempts = self.attempts.lock();
            let a = attempts.entry((peer, epoch)).or_default();
            if a.in_flight || a.last_failure.is_some_and(|t| t.elapsed() < self.cfg.retry_backoff) {
                return;
            }
            a.in_flight = true;
        }
        bump(&self.counters.handshakes_initiated);
        let me = self.clone();
        let spawned = spawn(format!("make-{peer}"), move || {
            let t0 = Instant::now();
            let result = me.initiate(peer);
            let ok = result.is_ok();
            me.finish(result, "initiator", Some(peer), epoch, t0, rekey);
            let mut attempts = me.attempts.lock();
            let a = attempts.entry((peer, epoch)).or_default();
            a.in_flight = false;
            a.last_failure = (!ok).then(Instant::now);
        });
        if spawned.is_err() {
            self.attempts.lock().entry((peer, epoch)).or_default().in_flight = false;
        }
    }

    fn initiate(&self, peer: SocketAddrV4) -> Result<SessionSecret, HandshakeError> {
        let deadline = Duration::from_millis(self.cfg.handshake.deadline_ms);
        let stream = TcpStream::connect_timeout(&self.route(&peer).into(), deadline)?;
        let mut t = TcpTransport::new(stream);
        run_initiator(&self.ctx, &self.store, peer, &mut t, self.cfg.handshake, None)
    }

    fn finish(
        &self,
        result: Result<SessionSecret, HandshakeError>,
        role: &'static str,
        peer: Option<SocketAddrV4>,
        epoch: u64,
        t0: Instant,
        rekey: bool,
    ) {
        let mut record = HandshakeRecord {
            role,
            peer: peer.map(|p| p.to_string()),
            epoch,
            key_id: None,
            error: None,
            reason: None,
            elapsed_ms: t0.elapsed().as_millis() as u64,
            rekey,
        };
        match result {
            Ok(s) => {
                record.peer = Some(s.peer.to_string());
                record.key_id = Some(s.key_id());
                record.epoch = s.epoch;
                self.install(&s);
                bump(&self.counters.handshakes_completed);
            }
            Err(e) => {
                log::info!("{role} handshake with {peer:?} failed: {e}");
                record.error = Some(e.kind().to_string());
                record.reason = Some(match &e {
                    HandshakeError::PeerAborted(r) => format!("{r:?}"),
                    e => format!("{:?}", e.abort_reason()),
                });
                bump(&self.counters.handshakes_failed);
            }
        }
        let mut records = self.records.lock();
        if records.len() == MAX_HANDSHAKE_RECORDS {
            records.pop_front();
        }
        records.push_back(record);
    }

    fn install(&self, s: &SessionSecret) {
        let entry = Arc::new(SessionKeyEntry::from_session(s, self.cfg.dataplane.rekey_threshold));
        if entry.epoch != self.life.active_epoch() {
            entry.destroy();
            return;
        }
        if let (_, Some(evicted)) = self.dp.keys().install(entry) {
            self.life.retire(evicted);
        }
    }

    fn accept_handshakes(self: Arc<Self>, listener: TcpListener) {
        while !self.stopping() {
            match listener.accept() {
                Ok((stream, _)) => {
                    let me = self.clone();
                    let _ = spawn("make-resp".into(), move || {
                        let _ = stream.set_nonblocking(false);
                        let t0 = Instant::now();
                        let mut t = TcpTransport::new(stream);
                        let epoch = me.store.epoch();
                        let r = run_responder(&me.ctx, &me.store, &mut t, me.cfg.handshake, None);
                        me.finish(r, "responder", None, epoch, t0, false);
                    });
                }
                Err(e) if timed_out(&e) => thread::sleep(Duration::from_millis(2)),
                Err(e) => log::warn!("handshake listener: {e}"),
            }
        }
    }

    fn coordinate(&self) {
        while !self.stopping() {
            self.life.poll(self.dp.last_grace_frame_ms());
            thread::sleep(self.cfg.poll_interval);
        }
    }

    fn roll(&self, bundle: &PolicyBundle) -> Result<u64, RollError> {
        let index = self.store.install(bundle)?;
        self.life.begin_rollover(index.epoch())?;
        Ok(index.epoch())
    }

    fn roll_path(&self, path: &Path) -> Result<u64, RollError> {
        let text = std::fs::read_to_string(path).map_err(|e| RollError::Document(format!("{}: {e}", path.display())))?;
        let doc = PolicyDocument::from_json(&text).map_err(|e| RollError::Document(e.to_string()))?;
        let bundle = doc.bundle().map_err(|e| RollError::Document(e.to_string()))?;
        self.roll(&bundle)
    }

    fn stats(&self) -> TunnelStats {
        let c = &self.counters;
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        TunnelStats {
            active_epoch: self.life.active_epoch(),
            plain_rx: g(&c.plain_rx),
            sealed: g(&c.sealed),
            sent_bytes: g(&c.sent_bytes),
            denied: g(&c.denied),
            key_pending: g(&c.key_pending),
            seal_errors: g(&c.seal_errors),
            net_rx: g(&c.net_rx),
            opened: g(&c.opened),
            delivered_bytes: g(&c.delivered_bytes),
            auth_failed: g(&c.auth_failed),
            unknown_key: g(&c.unknown_key),
            epoch_too_old: g(&c.epoch_too_old),
            replay: g(&c.replay),
            malformed: g(&c.malformed),
            handshakes_initiated: g(&c.handshakes_initiated),
            handshakes_completed: g(&c.handshakes_completed),
            handshakes_failed: g(&c.handshakes_failed),
            rekeys_triggered: g(&c.rekeys_triggered),
            live_keys: self.dp.keys().entries().iter().filter(|e| !e.is_destroyed()).count(),
            tx_bytes_by_dest: self.tx_by_dest.lock().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            epoch: self.life.stats(),
        }
    }

    fn set_stalled(&self, slot: u16, stalled: bool) -> bool {
        match self.stalled.get(slot as usize) {
            Some(s) => {
                s.store(stalled, Ordering::Release);
                true
            }
            None => false,
        }
    }

    fn serve_control(self: Arc<Self>, listener: UnixListener) {
        while !self.stopping() {
            match listener.accept() {
                Ok((stream, _)) => {
                    let me = self.clone();
                    let _ = spawn("control-conn".into(), move || me.control_session(stream));
                }
                Err(e) if timed_out(&e) => thread::sleep(Duration::from_millis(5)),
                Err(e) => log::warn!("control socket: {e}"),
            }
        }
    }

    fn control_session(&self, stream: UnixStream) {
        let _ = stream.set_nonblocking(false);
        let Ok(mut out) = stream.try_clone() else { return };
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { return };
            if line.trim().is_empty() {
                continue;
            }
            let reply = match serde_json::from_str::<Value>(&line) {
                Ok(cmd) => self.control(&cmd),
                Err(e) => json!({"ok": false, "error": format!("bad command: {e}")}),
            };
            if writeln!(out, "{reply}").is_err() {
                return;
            }
        }
    }

    fn control(&self, cmd: &Value) -> Value {
        let fail = |e: String| json!({"ok": false, "error": e});
        match cmd.get("cmd").and_then(Value::as_str) {
            Some("roll") => {
                let Some(path) = cmd.get("policy_path").and_then(Value::as_str) else {
                    return fail("roll needs policy_path".into());
                };
                match self.roll_path(Path::new(path)) {
                    Ok(epoch) => json!({"ok": true, "active_epoch": epoch}),
                    Err(e) => fail(e.to_string()),
                }
            }
            Some("stats") => json!({"ok": true, "stats": self.stats()}),
            Some("costs") => json!({"ok": true, "csv": self.dp.costs().to_csv()}),
            Some("handshakes") => json!({"ok": true, "handshakes": *self.records.lock()}),
            Some("stall_lane") => {
                let Some(lane) = cmd.get("lane").and_then(Value::as_u64) else {
                    return fail("stall_lane needs lane".into());
                };
                let stalled = cmd.get("stalled").and_then(Value::as_bool).unwrap_or(true);
                if self.set_stalled(lane as u16, stalled) {
                    json!({"ok": true})
                } else {
                    fail(format!("no lane {lane}"))
                }
            }
            Some("shutdown") => {
                self.stop.store(true, Ordering::Release);
                json!({"ok": true})
            }
            Some(other) => fail(format!("unknown command {other}")),
            None => fail("missing cmd".into()),
        }
    }
}

impl Tunnel {
    pub fn net_addr(&self) -> SocketAddrV4 {
        self.net_addr
    }

    pub fn plain_addr(&self) -> SocketAddrV4 {
        self.plain_addr
    }

    pub fn stats(&self) -> TunnelStats {
        self.shared.stats()
    }

    pub fn costs(&self) -> CostSummary {
        self.shared.dp.costs()
    }

    pub fn handshakes(&self) -> Vec<HandshakeRecord> {
        self.shared.records.lock().iter().cloned().collect()
    }

    pub fn dataplane(&self) -> &DataPlane {
        &self.shared.dp
    }

    pub fn lifecycle(&self) -> &EpochLifecycle {
        &self.shared.life
    }

    pub fn roll(&self, bundle: &PolicyBundle) -> Result<u64, RollError> {
        self.shared.roll(bundle)
    }

    pub fn roll_path(&self, path: &Path) -> Result<u64, RollError> {
        self.shared.roll_path(path)
    }

    /// Stops a worker's lane without parking it, so grace periods cannot
    /// complete. `slot` counts outbound lanes first, then inbound.
    pub fn stall_lane(&self, slot: u16, stalled: bool) -> bool {
        self.shared.set_stalled(slot, stalled)
    }

    /// Handles one control command as the control socket would.
    pub fn control(&self, cmd: &Value) -> Value {
        self.shared.control(cmd)
    }

    pub fn is_stopped(&self) -> bool {
        self.shared.stopping()
    }

    /// Blocks until a `shutdown` command arrives.
    pub fn wait(mut self) {
        while !self.shared.stopping() {
            thread::sleep(Duration::from_millis(20));
        }
        self.join();
    }

    pub fn shutdown(mut self) {
        self.shared.stop.store(true, Ordering::Release);
        self.join();
    }

    fn join(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        if let Some(path) = &self.shared.cfg.control {
            let _ = std::fs::remove_file(path);
        }
    }
}

impl Drop for Tunnel {
    fn drop(&mut self) {
        self.join();
    }
}

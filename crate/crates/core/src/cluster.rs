//! In-process deployments: an attestation authority, a policy owner, and
//! nodes with mutually pinned policies. Used by tests, the scenario runner
//! and benchmarks.

use std::net::{Ipv4Addr, SocketAddrV4};
use std::sync::Arc;
use std::time::Duration;

use ed25519_dalek::SigningKey;

use crate::attestation::{Authority, BootSequence, QuotingEnclave, Verifier, DEFAULT_POLL_INTERVAL_MS};
use crate::clock::Clock;
use crate::latency::LatencyDist;
use crate::make::{
    memory_pair, run_initiator, run_responder, AttestationContext, FlightTransport, Handshake,
    HandshakeConfig, HandshakeError, SessionSecret,
};
use crate::policy::{FlowRule, PeerEntry, PolicyBody, PolicyBundle, PolicyError, PolicyIndex, PolicyStore};
use crate::Digest48;

/// Static description of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSpec {
    pub address: SocketAddrV4,
    pub measurement: Digest48,
}

impl NodeSpec {
    /// A node named `name`, its measurement derived from the name.
    pub fn named(name: &str, address: SocketAddrV4) -> Self {
        Self {
            address,
            measurement: Digest48::hash(format!("janus/node/{name}").as_bytes()),
        }
    }
}

pub struct LocalNode {
    pub spec: NodeSpec,
    pub ctx: Arc<AttestationContext>,
    pub store: Arc<PolicyStore>,
}

/// A loopback address whose port is currently free for both UDP and TCP.
/// Another process may still take it before the caller binds.
pub fn free_loopback_addr() -> std::io::Result<SocketAddrV4> {
    loop {
        let udp = std::net::UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
        let port = udp.local_addr()?.port();
        if std::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)).is_ok() {
            return Ok(SocketAddrV4::new(Ipv4Addr::LOCALHOST, port));
        }
    }
}

/// Builds the policy bodies for `specs` at `epoch`, where `edges[i]` lists
/// the peers node `i` may talk to. Peer digest pins are filled in from the
/// peers' own bodies.
pub fn policy_bodies(specs: &[NodeSpec], edges: &[Vec<usize>], epoch: u64) -> Vec<PolicyBody> {
    let mut bodies: Vec<PolicyBody> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rules = edges[i]
                .iter()
                .map(|&j| FlowRule {
                    src_measurement: s.measurement,
                    dst: PeerEntry {
                        address: specs[j].address,
                        measurement: specs[j].measurement,
                        policy_digest: Digest48::ZERO,
                    },
                })
                .collect();
            PolicyBody::new(epoch, rules)
        })
        .collect();
    let digests: Vec<Digest48> = bodies.iter().map(|b| b.digest().expect("valid body")).collect();
    for (i, b) in bodies.iter_mut().enumerate() {
        for (r, &j) in b.rules.iter_mut().zip(&edges[i]) {
            debug_assert_eq!(r.dst.address, specs[j].address);
            r.dst.policy_digest = digests[j];
        }
    }
    bodies
}

/// Full mesh: every node may reach every other.
pub fn mesh_edges(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
}

pub struct ClusterBuilder {
    specs: Vec<NodeSpec>,
    edges: Option<Vec<Vec<usize>>>,
    epoch: u64,
    seed: u64,
    quote_latency: LatencyDist,
    live_qe: bool,
    proxy: Digest48,
    clock: Arc<dyn Clock>,
}

impl ClusterBuilder {
    pub fn new(specs: Vec<NodeSpec>, clock: Arc<dyn Clock>) -> Self {
        Self {
            specs,
            edges: None,
            epoch: 1,
            seed: 0,
            quote_latency: LatencyDist::fixed(0.0),
            live_qe: false,
            proxy: Digest48::hash(b"janus/proxy"),
            clock,
        }
    }

    /// `n` nodes at `10.0.0.(i+1):7000`.
    pub fn with_nodes(n: usize, clock: Arc<dyn Clock>) -> Self {
        let specs = (0..n)
            .map(|i| {
                NodeSpec::named(
                    &format!("n{i}"),
                    SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, i as u8 + 1), 7000),
                )
            })
            .collect();
        Self::new(specs, clock)
    }

    pub fn edges(mut self, edges: Vec<Vec<usize>>) -> Self {
        self.edges = Some(edges);
        self
    }

    pub fn epoch(mut self, epoch: u64) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn quote_latency(mut self, d: LatencyDist) -> Self {
        self.quote_latency = d;
        self
    }

    pub fn live_qe(mut self, live: bool) -> Self {
        self.live_qe = live;
        self
    }

    pub fn build(self) -> Cluster {
        let mut seed_bytes = [0u8; 32];
        seed_bytes[..8].copy_from_slice(&self.seed.to_le_bytes());
        let authority = Arc::new(Authority::from_seed(Digest48::hash(&seed_bytes).0[..32].try_into().unwrap()));
        let owner = SigningKey::from_bytes(&Digest48::hash(b"janus/owner").0[..32].try_into().unwrap());
        let edges = self.edges.unwrap_or_else(|| mesh_edges(self.specs.len()));
        let expected_rtmr3 = crate::attestation::MeasurementRegisters::reference_rtmr3(&self.proxy);
        let bodies = policy_bodies(&self.specs, &edges, self.epoch);
        let nodes = self
            .specs
            .iter()
            .zip(bodies)
            .enumerate()
            .map(|(i, (spec, body))| {
                let mut boot = BootSequence::new();
                boot.load_proxy_measurement(&self.proxy);
                boot.engage_bpf_lock();
                let qe = QuotingEnclave::new(authority.clone(), self.quote_latency, self.seed ^ (i as u64 + 1));
                let qe = if self.live_qe { qe.live() } else { qe };
                let verifier = Verifier::new(authority.clone(), DEFAULT_POLL_INTERVAL_MS, &*self.clock)
                    .expect("authority available at start");
                let ctx = AttestationContext::new(
                    spec.measurement,
                    boot.seal(),
                    expected_rtmr3,
                    Arc::new(qe),
                    Arc::new(verifier),
                    self.clock.clone(),
                )
                .with_seed(self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
                let bundle = body.sign(&owner).expect("valid body");
                let store = PolicyStore::new(PolicyIndex::empty());
                store.install(&bundle).expect("fresh store accepts");
                LocalNode {
                    spec: *spec,
                    ctx: Arc::new(ctx),
                    store: Arc::new(store),
                }
            })
            .collect();
        Cluster {
            authority,
            owner,
            nodes,
            edges,
            clock: self.clock,
            proxy: self.proxy,
            expected_rtmr3,
        }
    }
}

pub struct Cluster {
    pub authority: Arc<Authority>,
    pub owner: SigningKey,
    pub nodes: Vec<LocalNode>,
    pub edges: Vec<Vec<usize>>,
    pub clock: Arc<dyn Clock>,
    pub proxy: Digest48,
    pub expected_rtmr3: Digest48,
}

/// Outcome of one handshake attempt, as seen by each side.
#[derive(Debug)]
pub struct HandshakeRun {
    pub initiator: Result<SessionSecret, HandshakeError>,
    pub responder: Result<SessionSecret, HandshakeError>,
}

impl HandshakeRun {
    pub fn completed(&self) -> bool {
        self.initiator.is_ok() && self.responder.is_ok()
    }

    pub fn keys_agree(&self) -> bool {
        match (&self.initiator, &self.responder) {
            (Ok(a), Ok(b)) => a.keys == b.keys,
            _ => false,
        }
    }
}

/// Which flight a relay hook is looking at.
pub type TamperHook<'a> = dyn FnMut(u8, &mut Vec<u8>) + Send + 'a;

impl Cluster {
    pub fn node(&self, i: usize) -> &LocalNode {
        &self.nodes[i]
    }

    pub fn bodies_at(&self, epoch: u64) -> Vec<PolicyBody> {
        let specs: Vec<NodeSpec> = self.nodes.iter().map(|n| n.spec).collect();
        policy_bodies(&specs, &self.edges, epoch)
    }

    pub fn bundle_for(&self, i: usize, epoch: u64) -> PolicyBundle {
        self.bodies_at(epoch).swap_remove(i).sign(&self.owner).expect("valid body")
    }

    /// Installs the epoch-`epoch` policy on node `i` only.
    pub fn install(&self, i: usize, epoch: u64) -> Result<(), PolicyError> {
        self.nodes[i].store.install(&self.bundle_for(i, epoch)).map(|_| ())
    }

    /// Installs the epoch-`epoch` policy everywhere.
    pub fn rollover(&self, epoch: u64) -> Result<(), PolicyError> {
        for (node, body) in self.nodes.iter().zip(self.bodies_at(epoch)) {
            node.store.install(&body.sign(&self.owner).expect("valid body"))?;
        }
        Ok(())
    }

    /// Drives both state machines in-process, passing each flight through
    /// `tamper` on the way.
    pub fn handshake_direct(&self, i: usize, j: usize, tamper: &mut TamperHook<'_>) -> HandshakeRun {
        let (a, b) = (&self.nodes[i], &self.nodes[j]);
        let cfg = HandshakeConfig::default();
        let mut ini = Handshake::initiator(cfg);
        let mut res = Handshake::responder(cfg);
        let pending = || Err(HandshakeError::Transport("peer aborted first".into()));
        let a_idx = a.store.load();
        let b_idx = b.store.load();

        let mut f1 = match ini.initiate(&a.ctx, &a_idx, b.spec.address) {
            Ok(f) => f,
            Err(e) => return HandshakeRun { initiator: Err(e), responder: pending() },
        };
        tamper(1, &mut f1);
        let mut f2 = match res.respond(&b.ctx, &b_idx, &f1, Some(*a.spec.address.ip())) {
            Ok(f) => f,
            Err(e) => {
                let peer = ini.finalize_initiator(&a.ctx, &res.abort_flight(), a.store.epoch());
                return HandshakeRun { initiator: peer.map(|(s, _)| s), responder: Err(e) };
            }
        };
        tamper(2, &mut f2);
        let (s_a, mut f3) = match ini.finalize_initiator(&a.ctx, &f2, a.store.epoch()) {
            Ok(v) => v,
            Err(e) => {
                let peer = res.finalize_responder(&b.ctx, &ini.abort_flight(), b.store.epoch());
                return HandshakeRun { initiator: Err(e), responder: peer };
            }
        };
        tamper(3, &mut f3);
        let s_b = res.finalize_responder(&b.ctx, &f3, b.store.epoch());
        HandshakeRun { initiator: Ok(s_a), responder: s_b }
    }

    /// Runs the blocking drivers on two threads over the in-memory
    /// transport, with a relay thread in between applying `tamper`.
    pub fn handshake_threaded(
        &self,
        i: usize,
        j: usize,
        tamper: Box<TamperHook<'static>>,
        cfg: HandshakeConfig,
    ) -> HandshakeRun {
        let (a, b) = (&self.nodes[i], &self.nodes[j]);
        let (mut a_end, mut relay_a) = memory_pair();
        let (relay_b, b_end) = memory_pair();
        let mut b_end = b_end.with_peer_ip(*a.spec.address.ip());
        let dest = b.spec.address;
        std::thread::scope(|s| {
            let ini = s.spawn(|| run_initiator(&a.ctx, &a.store, dest, &mut a_end, cfg, None));
            let res = s.spawn(|| run_responder(&b.ctx, &b.store, &mut b_end, cfg, None));
            s.spawn(move || relay(&mut relay_a, relay_b, tamper, cfg));
            HandshakeRun {
                initiator: ini.join().expect("initiator thread"),
                responder: res.join().expect("responder thread"),
            }
        })
    }
}

/// Shuttles flights between the two sides; the initiator speaks first.
fn relay<T: FlightTransport>(a: &mut T, mut b: T, mut tamper: Box<TamperHook<'static>>, cfg: HandshakeConfig) {
    let wait = Duration::from_millis(cfg.deadline_ms + 500);
    let mut flight = 1u8;
    loop {
        let (from, to): (&mut dyn FlightTransport, &mut dyn FlightTransport) =
            if flight % 2 == 1 { (&mut *a, &mut b) } else { (&mut b, &mut *a) };
        let Ok(mut bytes) = from.recv_flight(wait) else { return };
        let is_abort = bytes.get(5) == Some(&crate::make::wire::ABORT_FLIGHT);
        if !is_abort {
            tamper(flight, &mut bytes);
        }
        if to.send_flight(&bytes).is_err() || is_abort || flight == 3 {
            return;
        }
        flight += 1;
    }
}

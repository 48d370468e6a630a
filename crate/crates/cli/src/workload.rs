//! Reliable bulk transfer between two applications attached to tunnels.
//!
//! Each application is a UDP socket that talks to its tunnel's plaintext
//! side through the destination shim. The sender numbers packets, the
//! receiver acknowledges each one, and the sender retransmits anything
//! unacknowledged after a fixed timeout. Payload bytes are a pure function
//! of the sequence number so the receiver can verify every byte.

use std::collections::HashMap;
use std::io;
use std::net::{Ipv4Addr, SocketAddrV4, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use janus_core::dataplane::tunnel::{decode_shim, encode_shim};

const DATA: u8 = 0;
const ACK: u8 = 1;
const HEADER: usize = 5;

/// An application socket bound next to a tunnel.
pub struct App {
    socket: UdpSocket,
    tunnel: SocketAddrV4,
}

impl App {
    pub fn bind(tunnel_plain: SocketAddrV4) -> io::Result<Self> {
        let socket = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
        socket.set_read_timeout(Some(Duration::from_millis(1)))?;
        Ok(Self { socket, tunnel: tunnel_plain })
    }

    pub fn try_clone(&self) -> io::Result<Self> {
        Ok(Self { socket: self.socket.try_clone()?, tunnel: self.tunnel })
    }

    pub fn local_addr(&self) -> SocketAddrV4 {
        match self.socket.local_addr() {
            Ok(std::net::SocketAddr::V4(a)) => a,
            _ => SocketAddrV4::new(Ipv4Addr::LOCALHOST, 0),
        }
    }

    pub fn send(&self, dest: &SocketAddrV4, payload: &[u8]) -> io::Result<()> {
        self.socket.send_to(&encode_shim(dest, payload), self.tunnel).map(|_| ())
    }

    /// Next delivered datagram and its source, or `None` on timeout.
    pub fn recv(&self, buf: &mut [u8]) -> Option<(SocketAddrV4, usize)> {
        let (n, _) = self.socket.recv_from(buf).ok()?;
        let (src, payload) = decode_shim(&buf[..n])?;
        let len = payload.len();
        buf.copy_within(n - len..n, 0);
        Some((src, len))
    }

    /// Sends to `dest` until something comes back from it, so the flow's
    /// session keys exist before timing starts.
    pub fn warm_up(&self, peer: &App, dest: &SocketAddrV4, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut buf = vec![0u8; 2048];
        while Instant::now() < deadline {
            let _ = self.send(dest, b"ping");
            if peer.recv(&mut buf).is_some() {
                return true;
            }
            thread::sleep(Duration::from_millis(5));
        }
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransferConfig {
    pub total_bytes: usize,
    pub chunk: usize,
    pub window: usize,
    pub rto: Duration,
    /// A packet counts as lost once one sent this much later is acknowledged.
    pub reorder: Duration,
    pub deadline: Duration,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            total_bytes: 10 * 1024 * 1024,
            chunk: 1400,
            window: 64,
            rto: Duration::from_millis(20),
            reorder: Duration::from_millis(1),
            deadline: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub packets: u32,
    pub bytes_delivered: usize,
    pub corrupt: u32,
    pub retransmits: u64,
    /// Longest interval without a new acknowledgement.
    pub max_ack_gap_ms: f64,
    pub elapsed_ms: f64,
    pub complete: bool,
}

/// Byte `i` of packet `seq`.
fn pattern(seq: u32, i: usize) -> u8 {
    (seq.wrapping_mul(2_654_435_761).wrapping_add(i as u32 * 40_503) >> 13) as u8
}

fn packet(seq: u32, len: usize) -> Vec<u8> {
    let mut p = Vec::with_capacity(HEADER + len);
    p.push(DATA);
    p.extend_from_slice(&seq.to_be_bytes());
    p.extend((0..len).map(|i| pattern(seq, i)));
    p
}

fn chunk_len(cfg: &TransferConfig, seq: u32) -> usize {
    let start = seq as usize * cfg.chunk;
    cfg.chunk.min(cfg.total_bytes - start)
}

/// Moves `cfg.total_bytes` from `sender` to `receiver`. `sender_dest` is
/// the receiver node's policy address and `receiver_dest` the sender
/// node's. `midway` runs once, when half the packets are acknowledged.
pub fn transfer(
    sender: &App,
    receiver: &App,
    sender_dest: SocketAddrV4,
    receiver_dest: SocketAddrV4,
    cfg: TransferConfig,
    mut midway: Option<&mut dyn FnMut()>,
) -> io::Result<TransferReport> {
    let packets = cfg.total_bytes.div_ceil(cfg.chunk) as u32;
    let stop = Arc::new(AtomicBool::new(false));
    let rx = receiver.try_clone()?;
    let rx_stop = stop.clone();
    let rx_cfg = cfg;
    let collector = thread::spawn(move || {
        let mut seen = vec![false; packets as usize];
        let (mut bytes, mut corrupt) = (0usize, 0u32);
        let mut buf = vec![0u8; 65536];
        while !rx_stop.load(Ordering::Acquire) {
            let Some((_, n)) = rx.recv(&mut buf) else { continue };
            if n < HEADER || buf[0] != DATA {
                continue;
            }
            let seq = u32::from_be_bytes(buf[1..5].try_into().expect("4 bytes"));
            if seq >= packets {
                continue;
            }
            let body = &buf[HEADER..n];
            if body.len() != chunk_len(&rx_cfg, seq) || body.iter().enumerate().any(|(i, b)| *b != pattern(seq, i)) {
                corrupt += 1;
                continue;
            }
            if !seen[seq as usize] {
                seen[seq as usize] = true;
                bytes += body.len();
            }
            let mut ack = [ACK, 0, 0, 0, 0];
            ack[1..].copy_from_slice(&seq.to_be_bytes());
            let _ = rx.send(&receiver_dest, &ack);
        }
        (bytes, corrupt)
    });

    let t0 = Instant::now();
    let mut acked = vec![false; packets as usize];
    let mut acked_count = 0u32;
    let mut in_flight: HashMap<u32, Instant> = HashMap::new();
    let mut next = 0u32;
    let mut retransmits = 0u64;
    let mut buf = vec![0u8; 65536];
    // Send time of the newest packet known to have arrived.
    let mut delivered_mark: Option<Instant> = None;
    let mut last_ack = t0;
    let mut max_gap = Duration::ZERO;
    while acked_count < packets && t0.elapsed() < cfg.deadline {
        while in_flight.len() < cfg.window && next < packets {
            sender.send(&sender_dest, &packet(next, chunk_len(&cfg, next)))?;
            in_flight.insert(next, Instant::now());
            next += 1;
        }
        while let Some((_, n)) = sender.recv(&mut buf) {
            if n == HEADER && buf[0] == ACK {
                let seq = u32::from_be_bytes(buf[1..5].try_into().expect("4 bytes"));
                if (seq as usize) < acked.len() && !acked[seq as usize] {
                    acked[seq as usize] = true;
                    acked_count += 1;
                    let now = Instant::now();
                    max_gap = max_gap.max(now - last_ack);
                    last_ack = now;
                    if let Some(sent) = in_flight.remove(&seq) {
                        delivered_mark = delivered_mark.max(Some(sent));
                    }
                }
            }
            if in_flight.len() < cfg.window / 2 {
                break;
            }
        }
        let now = Instant::now();
        for (seq, sent) in in_flight.iter_mut() {
            // Lost if a later send was acknowledged, or after the timeout.
            let overtaken = delivered_mark.is_some_and(|m| *sent + cfg.reorder < m);
            if overtaken || now.duration_since(*sent) >= cfg.rto {
                sender.send(&sender_dest, &packet(*seq, chunk_len(&cfg, *seq)))?;
                *sent = now;
                retransmits += 1;
            }
        }
        if acked_count * 2 >= packets {
            if let Some(f) = midway.take() {
                f();
            }
        }
    }
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    stop.store(true, Ordering::Release);
    let (bytes_delivered, corrupt) = collector.join().expect("collector thread");
    Ok(TransferReport {
        packets,
        bytes_delivered,
        corrupt,
        retransmits,
        max_ack_gap_ms: max_gap.as_secs_f64() * 1e3,
        elapsed_ms,
        complete: acked_count == packets,
    })
}

/// A constant-rate flow that runs until finished. Payloads carry a
/// sequence number so duplicates are not double counted.
pub struct PacedFlow {
    stop: Arc<AtomicBool>,
    sender: thread::JoinHandle<io::Result<u32>>,
    counter: thread::JoinHandle<u32>,
}

impl PacedFlow {
    pub fn start(sender: &App, receiver: &App, dest: SocketAddrV4, size: usize, interval: Duration) -> io::Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let sent_all = Arc::new(AtomicBool::new(false));
        let rx = receiver.try_clone()?;
        let done = sent_all.clone();
        let counter = thread::spawn(move || {
            let mut seen = std::collections::HashSet::new();
            let mut buf = vec![0u8; 65536];
            let mut quiet_since: Option<Instant> = None;
            loop {
                match rx.recv(&mut buf) {
                    Some((_, n)) if n >= HEADER && buf[0] == DATA => {
                        seen.insert(u32::from_be_bytes(buf[1..5].try_into().expect("4 bytes")));
                        quiet_since = None;
                    }
                    _ if done.load(Ordering::Acquire) => {
                        if quiet_since.get_or_insert_with(Instant::now).elapsed() > Duration::from_millis(200) {
                            break;
                        }
                    }
                    _ => {}
                }
            }
            seen.len() as u32
        });
        let tx = sender.try_clone()?;
        let tx_stop = stop.clone();
        let sender = thread::spawn(move || {
            let start = Instant::now();
            let mut seq = 0u32;
            let r = (|| {
                while !tx_stop.load(Ordering::Acquire) {
                    tx.send(&dest, &packet(seq, size))?;
                    seq += 1;
                    if let Some(d) = (start + interval * seq).checked_duration_since(Instant::now()) {
                        thread::sleep(d);
                    }
                }
                Ok(seq)
            })();
            sent_all.store(true, Ordering::Release);
            r
        });
        Ok(Self { stop, sender, counter })
    }

    /// Stops sending and returns `(sent, received)`.
    pub fn finish(self) -> io::Result<(u32, u32)> {
        self.stop.store(true, Ordering::Release);
        let sent = self.sender.join().expect("sender thread")?;
        Ok((sent, self.counter.join().expect("counter thread")))
    }
}

/// Counts datagrams delivered to `app` until it has been quiet for `quiet`.
pub fn drain(app: &App, quiet: Duration) -> usize {
    let mut buf = vec![0u8; 65536];
    let mut n = 0;
    let mut last = Instant::now();
    while last.elapsed() < quiet {
        if app.recv(&mut buf).is_some() {
            n += 1;
            last = Instant::now();
        }
    }
    n
}

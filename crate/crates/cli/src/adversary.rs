//! Man-in-the-middle relay between two tunnels.
//!
//! The relay owns one loopback endpoint per side. Node A routes its policy
//! address for B to `side_a`, and B routes its address for A to `side_b`.
//! UDP frames and TCP handshake streams crossing the relay pass through a
//! scripted plan that can tamper, drop, duplicate, delay, capture and inject.

use std::io::{self, Read, Write};
use std::net::{Ipv4Addr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use janus_core::make::wire::{Flight, MAX_FLIGHT_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    BToA,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameAction {
    Pass,
    Drop,
    Duplicate,
    /// Flips one bit, counted from the start of the frame.
    FlipBit(usize),
    DelayMs(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldEdit {
    /// XOR one byte of the field with 0x01.
    FlipByte(usize),
    Replace(Vec<u8>),
}

/// Rewrites one tagged field of one handshake flight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightTamper {
    pub flight_no: u8,
    pub tag: u16,
    pub edit: FieldEdit,
}

impl FlightTamper {
    /// Applies the edit if `bytes` is the targeted flight. Returns whether
    /// anything changed.
    pub fn apply(&self, bytes: &mut Vec<u8>) -> bool {
        let Ok(mut flight) = Flight::decode(bytes) else { return false };
        if flight.flight_no != self.flight_no {
            return false;
        }
        let Some((_, value)) = flight.fields.iter_mut().find(|(t, _)| *t == self.tag) else {
            return false;
        };
        match &self.edit {
            FieldEdit::FlipByte(i) => match value.get_mut(*i) {
                Some(b) => *b ^= 0x01,
                None => return false,
            },
            FieldEdit::Replace(v) => *value = v.clone(),
        }
        *bytes = flight.encode();
        true
    }
}

#[derive(Debug, Default)]
struct Plan {
    a_to_b: Vec<FrameAction>,
    b_to_a: Vec<FrameAction>,
    flights: Vec<FlightTamper>,
    capture: Option<Direction>,
    captured: Vec<(Direction, Vec<u8>)>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RelayCounters {
    pub frames_a_to_b: u64,
    pub frames_b_to_a: u64,
    pub dropped: u64,
    pub tampered_frames: u64,
    pub flights: u64,
    pub tampered_flights: u64,
    pub injected: u64,
}

#[derive(Default)]
struct Counters {
    frames_a_to_b: AtomicU64,
    frames_b_to_a: AtomicU64,
    dropped: AtomicU64,
    tampered_frames: AtomicU64,
    flights: AtomicU64,
    tampered_flights: AtomicU64,
    injected: AtomicU64,
}

struct Shared {
    a: SocketAddrV4,
    b: SocketAddrV4,
    sock_a: UdpSocket,
    sock_b: UdpSocket,
    plan: Mutex<Plan>,
    counters: Counters,
    stop: AtomicBool,
}

pub struct Relay {
    shared: Arc<Shared>,
    side_a: SocketAddrV4,
    side_b: SocketAddrV4,
    threads: Vec<JoinHandle<()>>,
}

/// UDP socket and TCP listener sharing one loopback port.
fn bind_pair() -> io::Result<(UdpSocket, TcpListener, SocketAddrV4)> {
    for _ in 0..64 {
        let udp = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
        let port = udp.local_addr()?.port();
        if let Ok(tcp) = TcpListener::bind((Ipv4Addr::LOCALHOST, port)) {
            return Ok((udp, tcp, SocketAddrV4::new(Ipv4Addr::LOCALHOST, port)));
        }
    }
    Err(io::Error::new(io::ErrorKind::AddrInUse, "no free loopback port"))
}

fn add(c: &AtomicU64, n: u64) {
    c.fetch_add(n, Ordering::Relaxed);
}

impl Relay {
    /// Starts a relay between the network endpoints of A and B.
    pub fn start(a: SocketAddrV4, b: SocketAddrV4) -> io::Result<Self> {
        let (sock_a, tcp_a, side_a) = bind_pair()?;
        let (sock_b, tcp_b, side_b) = bind_pair()?;
        for s in [&sock_a, &sock_b] {
            s.set_read_timeout(Some(Duration::from_millis(5)))?;
        }
        for l in [&tcp_a, &tcp_b] {
            l.set_nonblocking(true)?;
        }
        let shared = Arc::new(Shared {
            a,
            b,
            sock_a,
            sock_b,
            plan: Mutex::new(Plan::default()),
            counters: Counters::default(),
            stop: AtomicBool::new(false),
        });
        let mut threads = Vec::new();
        for dir in [Direction::AToB, Direction::BToA] {
            let s = shared.clone();
            threads.push(thread::spawn(move || s.pump_frames(dir)));
        }
        let s = shared.clone();
        threads.push(thread::spawn(move || s.accept(tcp_a, Direction::AToB)));
        let s = shared.clone();
        threads.push(thread::spawn(move || s.accept(tcp_b, Direction::BToA)));
        Ok(Self { shared, side_a, side_b, threads })
    }

    /// Where A must send traffic meant for B.
    pub fn side_a(&self) -> SocketAddrV4 {
        self.side_a
    }

    /// Where B must send traffic meant for A.
    pub fn side_b(&self) -> SocketAddrV4 {
        self.side_b
    }

    /// Replaces the frame rule for one direction. Rules are applied in
    /// order to every frame; an empty list passes everything.
    pub fn set_frame_rules(&self, dir: Direction, rules: Vec<FrameAction>) {
        let mut plan = self.shared.plan.lock();
        match dir {
            Direction::AToB => plan.a_to_b = rules,
            Direction::BToA => plan.b_to_a = rules,
        }
    }

    pub fn set_flight_tampers(&self, tampers: Vec<FlightTamper>) {
        self.shared.plan.lock().flights = tampers;
    }

    pub fn clear(&self) {
        let mut plan = self.shared.plan.lock();
        plan.a_to_b.clear();
        plan.b_to_a.clear();
        plan.flights.clear();
        plan.capture = None;
    }

    pub fn capture(&self, dir: Option<Direction>) {
        self.shared.plan.lock().capture = dir;
    }

    pub fn take_captured(&self) -> Vec<(Direction, Vec<u8>)> {
        std::mem::take(&mut self.shared.plan.lock().captured)
    }

    /// Sends `frame` to the far end of `dir` as if it had just crossed.
    pub fn inject(&self, dir: Direction, frame: &[u8]) -> io::Result<()> {
        self.shared.forward(dir, frame)?;
        add(&self.shared.counters.injected, 1);
        Ok(())
    }

    pub fn counters(&self) -> RelayCounters {
        let c = &self.shared.counters;
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        RelayCounters {
            frames_a_to_b: g(&c.frames_a_to_b),
            frames_b_to_a: g(&c.frames_b_to_a),
            dropped: g(&c.dropped),
            tampered_frames: g(&c.tampered_frames),
            flights: g(&c.flights),
            tampered_flights: g(&c.tampered_flights),
            injected: g(&c.injected),
        }
    }
}

impl Drop for Relay {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Shared {
    fn stopping(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    fn forward(&self, dir: Direction, frame: &[u8]) -> io::Result<usize> {
        match dir {
            Direction::AToB => self.sock_b.send_to(frame, self.b),
            Direction::BToA => self.sock_a.send_to(frame, self.a),
        }
    }

    fn pump_frames(&self, dir: Direction) {
        let sock = match dir {
            Direction::AToB => &self.sock_a,
            Direction::BToA => &self.sock_b,
        };
        let mut buf = vec![0u8; 65536];
        while !self.stopping() {
            let n = match sock.recv_from(&mut buf) {
                Ok((n, _)) => n,
                Err(_) => continue,
            };
            let mut frame = buf[..n].to_vec();
            let rules = {
                let mut plan = self.plan.lock();
                if plan.capture == Some(dir) {
                    plan.captured.push((dir, frame.clone()));
                }
                match dir {
                    Direction::AToB => plan.a_to_b.clone(),
                    Direction::BToA => plan.b_to_a.clone(),
                }
            };
            add(
                match dir {
                    Direction::AToB => &self.counters.frames_a_to_b,
                    Direction::BToA => &self.counters.frames_b_to_a,
                },
                1,
            );
            let mut copies = 1;
            let mut delay = None;
            for rule in &rules {
                match rule {
                    FrameAction::Pass => {}
                    FrameAction::Drop => copies = 0,
                    FrameAction::Duplicate => copies *= 2,
                    FrameAction::FlipBit(bit) => {
                        if let Some(b) = frame.get_mut(bit / 8) {
                            *b ^= 1 << (bit % 8);
                            add(&self.counters.tampered_frames, 1);
                        }
                    }
                    FrameAction::DelayMs(ms) => delay = Some(Duration::from_millis(*ms)),
                }
            }
            if copies == 0 {
                add(&self.counters.dropped, 1);
                continue;
            }
            if let Some(d) = delay {
                thread::sleep(d);
            }
            for _ in 0..copies {
                let _ = self.forward(dir, &frame);
            }
        }
    }

    fn accept(self: Arc<Self>, listener: TcpListener, dir: Direction) {
        while !self.stopping() {
            match listener.accept() {
                Ok((inbound, _)) => {
                    let me = self.clone();
                    thread::spawn(move || {
                        let _ = me.splice(inbound, dir);
                    });
                }
                Err(_) => thread::sleep(Duration::from_millis(2)),
            }
        }
    }

    /// Connects to the far node and relays flights both ways.
    fn splice(self: Arc<Self>, inbound: TcpStream, dir: Direction) -> io::Result<()> {
        inbound.set_nonblocking(false)?;
        let target = match dir {
            Direction::AToB => self.b,
            Direction::BToA => self.a,
        };
        let outbound = TcpStream::connect_timeout(&target.into(), Duration::from_secs(2))?;
        let (i2, o2) = (inbound.try_clone()?, outbound.try_clone()?);
        let me = self.clone();
        let back = thread::spawn(move || me.pump_flights(o2, i2));
        let r = self.pump_flights(inbound, outbound);
        let _ = back.join();
        r
    }

    fn pump_flights(&self, mut from: TcpStream, mut to: TcpStream) -> io::Result<()> {
        from.set_read_timeout(Some(Duration::from_millis(50)))?;
        let started = Instant::now();
        loop {
            if self.stopping() || started.elapsed() > Duration::from_secs(30) {
                break;
            }
            let mut len = [0u8; 4];
            match from.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                Err(_) => break,
            }
            let n = u32::from_le_bytes(len) as usize;
            if n > MAX_FLIGHT_LEN {
                break;
            }
            let mut bytes = vec![0u8; n];
            from.set_read_timeout(Some(Duration::from_secs(5)))?;
            from.read_exact(&mut bytes)?;
            from.set_read_timeout(Some(Duration::from_millis(50)))?;
            add(&self.counters.flights, 1);
            let tampers = self.plan.lock().flights.clone();
            if tampers.iter().fold(false, |hit, t| t.apply(&mut bytes) || hit) {
                add(&self.counters.tampered_flights, 1);
            }
            to.write_all(&(bytes.len() as u32).to_le_bytes())?;
            to.write_all(&bytes)?;
        }
        let _ = to.shutdown(std::net::Shutdown::Both);
        Ok(())
    }
}

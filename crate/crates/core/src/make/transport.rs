use std::io::{Read, Write};
use std::net::{IpAddr, Ipv4Addr, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::wire::MAX_FLIGHT_LEN;
use super::HandshakeError;

/// A reliable, ordered carrier for whole flights.
pub trait FlightTransport: Send {
    fn send_flight(&mut self, bytes: &[u8]) -> Result<(), HandshakeError>;
    fn recv_flight(&mut self, timeout: Duration) -> Result<Vec<u8>, HandshakeError>;
    fn peer_ip(&self) -> Option<Ipv4Addr> {
        None
    }
}

pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    peer_ip: Option<Ipv4Addr>,
}

/// Two connected in-process endpoints.
pub fn memory_pair() -> (MemoryTransport, MemoryTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        MemoryTransport { tx: a_tx, rx: a_rx, peer_ip: None },
        MemoryTransport { tx: b_tx, rx: b_rx, peer_ip: None },
    )
}

impl MemoryTransport {
    pub fn with_peer_ip(mut self, ip: Ipv4Addr) -> Self {
        self.peer_ip = Some(ip);
        self
    }
}

impl FlightTransport for MemoryTransport {
    fn send_flight(&mut self, bytes: &[u8]) -> Result<(), HandshakeError> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| HandshakeError::Transport("peer closed".into()))
    }

    fn recv_flight(&mut self, timeout: Duration) -> Result<Vec<u8>, HandshakeError> {
        match self.rx.recv_timeout(timeout) {
            Ok(b) => Ok(b),
            Err(RecvTimeoutError::Timeout) => Err(HandshakeError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(HandshakeError::Transport("peer closed".into())),
        }
    }

    fn peer_ip(&self) -> Option<Ipv4Addr> {
        self.peer_ip
    }
}

/// Flights as `u32le length || bytes` over TCP.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Self {
        let _ = stream.set_nodelay(true);
        Self { stream }
    }

    pub fn into_inner(self) -> TcpStream {
        self.stream
    }
}

impl FlightTransport for TcpTransport {
    fn send_flight(&mut self, bytes: &[u8]) -> Result<(), HandshakeError> {
        let mut buf = Vec::with_capacity(4 + bytes.len());
        buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(bytes);
        self.stream.write_all(&buf)?;
        Ok(())
    }

    fn recv_flight(&mut self, timeout: Duration) -> Result<Vec<u8>, HandshakeError> {
        self.stream.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        let mut len = [0u8; 4];
        self.stream.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len) as usize;
        if len > MAX_FLIGHT_LEN {
            return Err(HandshakeError::MalformedFlight(format!("length {len} exceeds limit")));
        }
        let mut buf = vec![0u8; len];
        self.stream.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn peer_ip(&self) -> Option<Ipv4Addr> {
        match self.stream.peer_addr().ok()?.ip() {
            IpAddr::V4(ip) => Some(ip),
            IpAddr::V6(_) => None,
        }
    }
}

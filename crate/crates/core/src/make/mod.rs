//! Mutually attested key exchange.
//!
//! Three flights over a reliable stream:
//!
//! 1. initiator → responder: `pk_s, Q_s, n_s` (epoch in the header)
//! 2. responder → initiator: `pk_d, π_d, Q_d, n_d`
//! 3. initiator → responder: `HMAC(confirm_key, Q_d || Q_s)`
//!
//! Each quote's report data commits to the sender's ephemeral key, policy
//! digest and nonce (and for `Q_d`, the initiator's key and nonce too), so
//! a relay that swaps any of them is caught by the recomputation on the
//! other side. Session keys come from HKDF over the ECDH secret salted with
//! both quotes.

mod cache;
mod context;
mod driver;
mod handshake;
mod kdf;
mod transport;
pub mod wire;

pub use cache::{SessionCache, SessionCacheKey, LOCK_BUDGET};
pub use context::{AttestationContext, HandshakeConfig};
pub use driver::{run_initiator, run_responder};
pub use handshake::{Handshake, Phase, Role, SessionBinding, SessionSecret};
pub use kdf::{
    confirmation_mac, derive_session, encode_public, parse_public, DerivedKeys, INFO_CONFIRM,
    INFO_DATA, INFO_KEY_ID, INFO_NONCE_PREFIX, PUBLIC_KEY_LEN,
};
pub use transport::{memory_pair, FlightTransport, MemoryTransport, TcpTransport};

use crate::attestation::AttestationError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HandshakeError {
    #[error("epoch mismatch: local {local}, peer {peer}")]
    EpochMismatch { local: u64, peer: u64 },
    #[error("attestation rejected: {0}")]
    AttestationRejected(AttestationError),
    #[error("report data does not bind the handshake parameters")]
    BindingMismatch,
    #[error("peer policy digest differs from the pinned value")]
    PolicyDigestMismatch,
    #[error("malformed flight: {0}")]
    MalformedFlight(String),
    #[error("key confirmation failed")]
    ConfirmationFailed,
    #[error("handshake deadline exceeded")]
    Timeout,
    #[error("invalid curve point")]
    InvalidPoint,
    #[error("flight out of order for phase {0:?}")]
    OutOfOrder(Phase),
    #[error("destination not authorized by policy")]
    Denied,
    #[error("session cache lock budget exhausted")]
    ConnectionRefused,
    #[error("peer aborted: {0:?}")]
    PeerAborted(AbortReason),
    #[error("transport: {0}")]
    Transport(String),
}

/// Machine-readable abort codes carried in tag-6 fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum AbortReason {
    EpochMismatch = 1,
    SignatureInvalid = 2,
    MeasurementMismatch = 3,
    Rtmr3Mismatch = 4,
    Revoked = 5,
    CollateralStale = 6,
    BindingMismatch = 7,
    PolicyDigestMismatch = 8,
    MalformedFlight = 9,
    ConfirmationFailed = 10,
    Timeout = 11,
    InvalidPoint = 12,
    OutOfOrder = 13,
    ConnectionRefused = 14,
    Other = 15,
}

impl AbortReason {
    pub fn from_code(code: u16) -> Self {
        use AbortReason::*;
        match code {
            1 => EpochMismatch,
            2 => SignatureInvalid,
            3 => MeasurementMismatch,
            4 => Rtmr3Mismatch,
            5 => Revoked,
            6 => CollateralStale,
            7 => BindingMismatch,
            8 => PolicyDigestMismatch,
            9 => MalformedFlight,
            10 => ConfirmationFailed,
            11 => Timeout,
            12 => InvalidPoint,
            13 => OutOfOrder,
            14 => ConnectionRefused,
            _ => Other,
        }
    }
}

impl HandshakeError {
    pub fn abort_reason(&self) -> AbortReason {
        use AttestationError as A;
        match self {
            HandshakeError::EpochMismatch { .. } => AbortReason::EpochMismatch,
            HandshakeError::AttestationRejected(a) => match a {
                A::SignatureInvalid => AbortReason::SignatureInvalid,
                A::MeasurementMismatch => AbortReason::MeasurementMismatch,
                A::Rtmr3Mismatch => AbortReason::Rtmr3Mismatch,
                A::Revoked => AbortReason::Revoked,
                A::CollateralStale | A::RefreshFailed => AbortReason::CollateralStale,
                A::NotSealed => AbortReason::Other,
            },
            HandshakeError::BindingMismatch => AbortReason::BindingMismatch,
            HandshakeError::PolicyDigestMismatch => AbortReason::PolicyDigestMismatch,
            HandshakeError::MalformedFlight(_) => AbortReason::MalformedFlight,
            HandshakeError::ConfirmationFailed => AbortReason::ConfirmationFailed,
            HandshakeError::Timeout => AbortReason::Timeout,
            HandshakeError::InvalidPoint => AbortReason::InvalidPoint,
            HandshakeError::OutOfOrder(_) => AbortReason::OutOfOrder,
            HandshakeError::ConnectionRefused => AbortReason::ConnectionRefused,
            HandshakeError::Denied | HandshakeError::PeerAborted(_) | HandshakeError::Transport(_) => {
                AbortReason::Other
            }
        }
    }

    /// Short stable name for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            HandshakeError::EpochMismatch { .. } => "EpochMismatch",
            HandshakeError::AttestationRejected(_) => "AttestationRejected",
            HandshakeError::BindingMismatch => "BindingMismatch",
            HandshakeError::PolicyDigestMismatch => "PolicyDigestMismatch",
            HandshakeError::MalformedFlight(_) => "MalformedFlight",
            HandshakeError::ConfirmationFailed => "ConfirmationFailed",
            HandshakeError::Timeout => "Timeout",
            HandshakeError::InvalidPoint => "InvalidPoint",
            HandshakeError::OutOfOrder(_) => "OutOfOrder",
            HandshakeError::Denied => "Denied",
            HandshakeError::ConnectionRefused => "ConnectionRefused",
            HandshakeError::PeerAborted(_) => "PeerAborted",
            HandshakeError::Transport(_) => "Transport",
        }
    }
}

impl From<AttestationError> for HandshakeError {
    fn from(e: AttestationError) -> Self {
        HandshakeError::AttestationRejected(e)
    }
}

impl From<std::io::Error> for HandshakeError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => HandshakeError::Timeout,
            _ => HandshakeError::Transport(e.to_string()),
        }
    }
}

//! Confidential interconnect toolkit.
//!
//! The crate is split the same way the runtime is: a control plane that
//! establishes attested session keys ([`make`], [`attestation`], [`policy`])
//! and a data plane that enforces flow policy and seals datagrams with those
//! keys ([`dataplane`], [`epoch`]).
//!
//! Time is always read through a [`clock::Clock`], so the same code runs
//! against the wall clock in a live tunnel and against virtual time in
//! simulations and tests.

pub mod attestation;
pub mod clock;
pub mod cluster;
pub mod dataplane;
pub mod digest;
pub mod epoch;
pub mod latency;
pub mod make;
pub mod policy;

pub use digest::Digest48;

/// A semantic validation failure, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

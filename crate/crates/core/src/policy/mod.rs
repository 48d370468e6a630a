//! Signed, epoch-versioned flow policy.
//!
//! A bundle authorizes directed flows from a local measurement to remote
//! peers identified by `(IPv4, port)`, and pins each peer's expected
//! measurement and policy digest. Bundles are authored as JSON, converted to
//! a canonical byte form for signing and digesting, and compiled into a
//! hash-indexed [`PolicyIndex`] for the data plane.

mod canonical;
mod document;
mod index;

use std::net::SocketAddrV4;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};

use crate::{Digest48, ValidationError};

pub use canonical::{canonical_bytes, digest_input_bytes};
pub use document::{PolicyDocument, RuleDocument};
pub use index::{FlowDecision, PolicyIndex, PolicyStore};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy signature does not verify under the owner key")]
    SignatureInvalid,
    #[error("policy epoch {offered} does not advance installed epoch {current}")]
    EpochDowngrade { offered: u64, current: u64 },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// A remote peer as pinned by policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeerEntry {
    pub address: SocketAddrV4,
    /// Expected initial-state measurement of the peer.
    pub measurement: Digest48,
    /// Expected digest of the peer's own installed policy.
    pub policy_digest: Digest48,
}

/// One authorized directed edge: `src_measurement -> dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowRule {
    pub src_measurement: Digest48,
    pub dst: PeerEntry,
}

/// The signed content of a bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyBody {
    pub epoch: u64,
    pub rules: Vec<FlowRule>,
}

impl PolicyBody {
    pub fn new(epoch: u64, rules: Vec<FlowRule>) -> Self {
        Self { epoch, rules }
    }

    /// Checks every rule and rejects duplicate destination keys.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut seen = std::collections::HashSet::with_capacity(self.rules.len());
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.src_measurement.is_zero() {
                return Err(ValidationError::new(
                    format!("rules[{i}].src_measurement"),
                    "missing measurement",
                ));
            }
            if rule.dst.address.port() == 0 {
                return Err(ValidationError::new(
                    format!("rules[{i}].dst.port"),
                    "port must be in 1..=65535",
                ));
            }
            if rule.dst.measurement.is_zero() {
                return Err(ValidationError::new(
                    format!("rules[{i}].dst.measurement"),
                    "missing measurement",
                ));
            }
            if !seen.insert(rule.dst.address) {
                return Err(ValidationError::new(
                    format!("rules[{i}].dst"),
                    format!("duplicate destination {}", rule.dst.address),
                ));
            }
        }
        Ok(())
    }

    /// The policy digest: SHA-384 over the epoch and rules.
    ///
    /// Peer policy-digest pins are left out of the hashed form so that two
    /// nodes can pin each other's digest; everything else in a rule is
    /// covered.
    pub fn digest(&self) -> Result<Digest48, ValidationError> {
        Ok(Digest48::hash(&digest_input_bytes(self)?))
    }

    pub fn sign(self, key: &SigningKey) -> Result<PolicyBundle, ValidationError> {
        let bytes = canonical_bytes(&self)?;
        let signature = key.sign(&bytes).to_bytes();
        Ok(PolicyBundle {
            body: self,
            owner_key: key.verifying_key().to_bytes(),
            signature,
        })
    }
}

/// A policy body with the owner's Ed25519 signature over its canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyBundle {
    pub body: PolicyBody,
    pub owner_key: [u8; 32],
    pub signature: [u8; 64],
}

impl PolicyBundle {
    pub fn epoch(&self) -> u64 {
        self.body.epoch
    }

    pub fn digest(&self) -> Result<Digest48, ValidationError> {
        self.body.digest()
    }

    pub fn verify_signature(&self) -> Result<(), PolicyError> {
        let bytes = canonical_bytes(&self.body)?;
        let key =
            VerifyingKey::from_bytes(&self.owner_key).map_err(|_| PolicyError::SignatureInvalid)?;
        key.verify(&bytes, &Signature::from_bytes(&self.signature))
            .map_err(|_| PolicyError::SignatureInvalid)
    }

    /// Same as [`PolicyBundle::verify_signature`], additionally requiring a
    /// specific owner.
    pub fn verify_owner(&self, owner: &VerifyingKey) -> Result<(), PolicyError> {
        if owner.to_bytes() != self.owner_key {
            return Err(PolicyError::SignatureInvalid);
        }
        self.verify_signature()
    }
}

/// Verifies a bundle against the node's current epoch and compiles it.
pub fn verify_and_install(
    bundle: &PolicyBundle,
    current_epoch: u64,
) -> Result<PolicyIndex, PolicyError> {
    bundle.body.validate()?;
    bundle.verify_signature()?;
    if bundle.epoch() <= current_epoch {
        return Err(PolicyError::EpochDowngrade {
            offered: bundle.epoch(),
            current: current_epoch,
        });
    }
    Ok(PolicyIndex::build(&bundle.body)?)
}

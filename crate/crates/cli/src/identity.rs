//! Node identity files and simulated measured boot.

use std::net::SocketAddrV4;
use std::path::Path;
use std::sync::Arc;

use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};

use janus_core::attestation::{
    Authority, BootSequence, MeasurementRegisters, QuotingEnclave, Verifier, DEFAULT_POLL_INTERVAL_MS, PROXY_RTMR,
};
use janus_core::clock::Clock;
use janus_core::latency::LatencyDist;
use janus_core::make::AttestationContext;
use janus_core::policy::{PolicyBundle, PolicyDocument, PolicyIndex, PolicyStore};
use janus_core::{Digest48, ValidationError};

use crate::error::{CliError, CliResult};

/// Everything a node process needs to attest itself and verify peers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeIdentity {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<SocketAddrV4>,
    pub measurement: Digest48,
    pub proxy_digest: Digest48,
    pub bpf_lock: bool,
    /// RTMR3 reached at bootstrap.
    pub rtmr3: Digest48,
    /// RTMR3 this node requires of its peers.
    pub expected_rtmr3: Digest48,
    /// Hex seed of the attestation authority shared by the deployment.
    pub authority_seed: String,
    #[serde(default)]
    pub revoked: Vec<Digest48>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_pubkey: Option<String>,
    /// Fixes the handshake randomness. Only for reproducible test runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quote_latency: Option<LatencyDist>,
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub name: String,
    /// Bytes standing in for the proxy binary.
    pub proxy_image: Vec<u8>,
    pub skip_lock: bool,
    pub measurement: Option<Digest48>,
    pub address: Option<SocketAddrV4>,
    pub authority_seed: [u8; 32],
    pub owner_pubkey: Option<VerifyingKey>,
    pub expected_rtmr3: Option<Digest48>,
    pub seed: Option<u64>,
}

pub fn default_measurement(name: &str) -> Digest48 {
    Digest48::hash(format!("janus/node/{name}").as_bytes())
}

/// Proxy measurement, lock, register extension, seal.
pub fn boot_registers(proxy: &Digest48, lock: bool) -> MeasurementRegisters {
    let mut boot = BootSequence::new();
    boot.load_proxy_measurement(proxy);
    if lock {
        boot.engage_bpf_lock();
    }
    boot.seal()
}

pub fn bootstrap(cfg: BootstrapConfig) -> NodeIdentity {
    let proxy = Digest48::hash(&cfg.proxy_image);
    let regs = boot_registers(&proxy, !cfg.skip_lock);
    NodeIdentity {
        measurement: cfg.measurement.unwrap_or_else(|| default_measurement(&cfg.name)),
        name: cfg.name,
        address: cfg.address,
        proxy_digest: proxy,
        bpf_lock: !cfg.skip_lock,
        rtmr3: regs.rtmr(PROXY_RTMR),
        expected_rtmr3: cfg.expected_rtmr3.unwrap_or_else(|| MeasurementRegisters::reference_rtmr3(&proxy)),
        authority_seed: hex::encode(cfg.authority_seed),
        revoked: Vec::new(),
        owner_pubkey: cfg.owner_pubkey.map(|k| hex::encode(k.as_bytes())),
        seed: cfg.seed,
        quote_latency: None,
    }
}

pub fn parse_hex32(field: &str, s: &str) -> Result<[u8; 32], ValidationError> {
    let v = hex::decode(s.trim()).map_err(|e| ValidationError::new(field, e.to_string()))?;
    v.as_slice()
        .try_into()
        .map_err(|_| ValidationError::new(field, format!("expected 32 bytes, got {}", v.len())))
}

pub fn parse_owner(s: &str) -> Result<VerifyingKey, ValidationError> {
    VerifyingKey::from_bytes(&parse_hex32("owner_pubkey", s)?)
        .map_err(|_| ValidationError::new("owner_pubkey", "not an ed25519 public key"))
}

impl NodeIdentity {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Replays the boot and checks it reproduces the recorded RTMR3.
    pub fn registers(&self) -> Result<MeasurementRegisters, ValidationError> {
        let regs = boot_registers(&self.proxy_digest, self.bpf_lock);
        if regs.rtmr(PROXY_RTMR) != self.rtmr3 {
            return Err(ValidationError::new("rtmr3", "does not match the recorded boot"));
        }
        Ok(regs)
    }

    pub fn authority(&self) -> Result<Authority, ValidationError> {
        let a = Authority::from_seed(parse_hex32("authority_seed", &self.authority_seed)?);
        for m in &self.revoked {
            a.revoke(*m);
        }
        Ok(a)
    }

    pub fn context(&self, clock: Arc<dyn Clock>) -> CliResult<AttestationContext> {
        let regs = self.registers()?;
        let authority = Arc::new(self.authority()?);
        let seed = self.seed.unwrap_or(0);
        let qe = QuotingEnclave::new(authority.clone(), self.quote_latency.unwrap_or(LatencyDist::fixed(0.0)), seed);
        let verifier = Verifier::new(authority, DEFAULT_POLL_INTERVAL_MS, &*clock)
            .map_err(|e| CliError::Transport(format!("collateral: {e}")))?;
        let ctx = AttestationContext::new(self.measurement, regs, self.expected_rtmr3, Arc::new(qe), Arc::new(verifier), clock);
        Ok(match self.seed {
            Some(s) => ctx.with_seed(s),
            None => ctx,
        })
    }

    /// A policy store holding `bundle`, pinned to the owner key if the
    /// identity names one.
    pub fn policy_store(&self, bundle: &PolicyBundle) -> CliResult<PolicyStore> {
        let store = match &self.owner_pubkey {
            Some(k) => PolicyStore::with_owner(PolicyIndex::empty(), parse_owner(k)?),
            None => PolicyStore::new(PolicyIndex::empty()),
        };
        store.install(bundle)?;
        Ok(store)
    }
}

pub fn load_bundle(path: &Path) -> CliResult<PolicyBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(PolicyDocument::from_json(&text)?.bundle()?)
}

pub fn save_bundle(bundle: &PolicyBundle, path: &Path) -> CliResult<()> {
    std::fs::write(path, PolicyDocument::from_bundle(bundle).to_json_pretty() + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use janus_core::clock::SimClock;

    fn cfg(image: &[u8], skip_lock: bool) -> BootstrapConfig {
        BootstrapConfig {
            name: "n0".into(),
            proxy_image: image.to_vec(),
            skip_lock,
            measurement: None,
            address: None,
            authority_seed: [7; 32],
            owner_pubkey: None,
            expected_rtmr3: None,
            seed: Some(1),
        }
    }

    #[test]
    fn bootstrap_is_deterministic() {
        assert_eq!(bootstrap(cfg(b"proxy", false)), bootstrap(cfg(b"proxy", false)));
    }

    #[test]
    fn proxy_and_lock_feed_rtmr3() {
        let base = bootstrap(cfg(b"proxy", false));
        assert_eq!(base.rtmr3, base.expected_rtmr3);
        let other = bootstrap(cfg(b"proxy2", false));
        assert_ne!(other.rtmr3, base.rtmr3);
        let unlocked = bootstrap(cfg(b"proxy", true));
        assert_ne!(unlocked.rtmr3, unlocked.expected_rtmr3);
        assert_eq!(unlocked.expected_rtmr3, base.rtmr3);
    }

    #[test]
    fn edited_identity_is_rejected() {
        let mut id = bootstrap(cfg(b"proxy", false));
        id.bpf_lock = false;
        assert_eq!(id.registers().unwrap_err().field, "rtmr3");
        let id = bootstrap(cfg(b"proxy", false));
        let json = serde_json::to_string(&id).unwrap();
        let back: NodeIdentity = serde_json::from_str(&json).unwrap();
        assert_eq!(back, id);
        assert!(back.context(SimClock::new(0)).unwrap().is_sealed());
    }
}

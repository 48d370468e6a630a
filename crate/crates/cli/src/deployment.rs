//! Key material and per-node assets for a local multi-node deployment.

use std::net::SocketAddrV4;
use std::path::{Path, PathBuf};

use ed25519_dalek::SigningKey;

use janus_core::attestation::MeasurementRegisters;
use janus_core::cluster::{policy_bodies, NodeSpec};
use janus_core::policy::{PolicyBody, PolicyBundle};
use janus_core::Digest48;

use crate::error::CliResult;
use crate::identity::{boot_registers, default_measurement, save_bundle, NodeIdentity};

#[derive(Debug, Clone)]
pub struct NodePlan {
    pub name: String,
    pub address: SocketAddrV4,
    pub measurement: Digest48,
    /// Cleared to model a boot that skipped the lock step.
    pub bpf_lock: bool,
}

impl NodePlan {
    pub fn new(name: &str, address: SocketAddrV4) -> Self {
        Self {
            name: name.to_owned(),
            address,
            measurement: default_measurement(name),
            bpf_lock: true,
        }
    }
}

pub struct Deployment {
    pub seed: u64,
    pub authority_seed: [u8; 32],
    pub owner: SigningKey,
    pub proxy: Digest48,
    pub nodes: Vec<NodePlan>,
}

fn derive32(seed: u64, label: &str) -> [u8; 32] {
    let d = Digest48::hash_parts([label.as_bytes(), &seed.to_le_bytes()[..]]);
    d.0[..32].try_into().expect("48 >= 32")
}

impl Deployment {
    pub fn new(seed: u64, nodes: Vec<NodePlan>) -> Self {
        Self {
            seed,
            authority_seed: derive32(seed, "janus/authority"),
            owner: SigningKey::from_bytes(&derive32(seed, "janus/owner")),
            proxy: Digest48::hash(b"janus/proxy/image"),
            nodes,
        }
    }

    pub fn specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec { address: n.address, measurement: n.measurement })
            .collect()
    }

    pub fn identity(&self, i: usize) -> NodeIdentity {
        let n = &self.nodes[i];
        NodeIdentity {
            name: n.name.clone(),
            address: Some(n.address),
            measurement: n.measurement,
            proxy_digest: self.proxy,
            bpf_lock: n.bpf_lock,
            rtmr3: boot_registers(&self.proxy, n.bpf_lock).rtmr(3),
            expected_rtmr3: MeasurementRegisters::reference_rtmr3(&self.proxy),
            authority_seed: hex::encode(self.authority_seed),
            revoked: Vec::new(),
            owner_pubkey: Some(hex::encode(self.owner.verifying_key().as_bytes())),
            seed: Some(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)),
            quote_latency: None,
        }
    }

    /// Bodies where `edges[i]` lists the peers node `i` may reach, with
    /// peer digests pinned from the peers' own bodies.
    pub fn bodies(&self, edges: &[Vec<usize>], epoch: u64) -> Vec<PolicyBody> {
        policy_bodies(&self.specs(), edges, epoch)
    }

    pub fn sign(&self, body: PolicyBody) -> PolicyBundle {
        body.sign(&self.owner).expect("bodies built here are valid")
    }

    pub fn write_identity(&self, i: usize, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(format!("{}.identity.json", self.nodes[i].name));
        self.identity(i).save(&path)?;
        Ok(path)
    }

    pub fn write_bundle(&self, name: &str, bundle: &PolicyBundle, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(format!("{name}.epoch{}.policy.json", bundle.epoch()));
        save_bundle(bundle, &path)?;
        Ok(path)
    }
}

//! JSON authoring format.
//!
//! ```json
//! { "epoch": 3,
//!   "rules": [ { "src_measurement": "<hex48>",
//!                "dst": { "ip": "10.0.0.2", "port": 7000,
//!                         "measurement": "<hex48>", "policy_digest": "<hex48>" } } ],
//!   "owner_pubkey": "<hex32>",
//!   "signature": "<hex64>" }
//! ```
//!
//! Every field is optional at the serde level so that a missing or malformed
//! field surfaces as a [`ValidationError`] naming it, rather than a generic
//! parse error.

use std::net::{Ipv4Addr, SocketAddrV4};

use serde::{Deserialize, Serialize};

use super::{FlowRule, PeerEntry, PolicyBody, PolicyBundle};
use crate::{Digest48, ValidationError};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DstDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_digest: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_measurement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<DstDocument>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PolicyDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
    #[serde(default)]
    pub rules: Vec<RuleDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_pubkey: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
}

fn required<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T, ValidationError> {
    v.as_ref()
        .ok_or_else(|| ValidationError::new(field, "missing"))
}

fn fixed_hex<const N: usize>(field: &str, s: &str) -> Result<[u8; N], ValidationError> {
    let bytes = hex::decode(s).map_err(|e| ValidationError::new(field, e.to_string()))?;
    bytes
        .as_slice()
        .try_into()
        .map_err(|_| ValidationError::new(field, format!("expected {N} bytes, got {}", bytes.len())))
}

impl PolicyDocument {
    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(text).map_err(|e| ValidationError::new("document", e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy document serializes")
    }

    /// The signed content, ignoring any key or signature present.
    pub fn body(&self) -> Result<PolicyBody, ValidationError> {
        let epoch = *required(&self.epoch, "epoch")?;
        let mut rules = Vec::with_capacity(self.rules.len());
        for (i, r) in self.rules.iter().enumerate() {
            let f = |name: &str| format!("rules[{i}].{name}");
            let src = Digest48::from_hex(
                &f("src_measurement"),
                required(&r.src_measurement, &f("src_measurement"))?,
            )?;
            let dst = required(&r.dst, &f("dst"))?;
            let ip: Ipv4Addr = required(&dst.ip, &f("dst.ip"))?
                .parse()
                .map_err(|_| ValidationError::new(f("dst.ip"), "not an IPv4 address"))?;
            let port = *required(&dst.port, &f("dst.port"))?;
            if !(1..=65535).contains(&port) {
                return Err(ValidationError::new(f("dst.port"), "port must be in 1..=65535"));
            }
            let measurement = Digest48::from_hex(
                &f("dst.measurement"),
                required(&dst.measurement, &f("dst.measurement"))?,
            )?;
            let policy_digest = Digest48::from_hex(
                &f("dst.policy_digest"),
                required(&dst.policy_digest, &f("dst.policy_digest"))?,
            )?;
            rules.push(FlowRule {
                src_measurement: src,
                dst: PeerEntry {
                    address: SocketAddrV4::new(ip, port as u16),
                    measurement,
                    policy_digest,
                },
            });
        }
        let body = PolicyBody::new(epoch, rules);
        body.validate()?;
        Ok(body)
    }

    pub fn bundle(&self) -> Result<PolicyBundle, ValidationError> {
        let body = self.body()?;
        let owner_key = fixed_hex::<32>("owner_pubkey", required(&self.owner_pubkey, "owner_pubkey")?)?;
        let signature = fixed_hex::<64>("signature", required(&self.signature, "signature")?)?;
        Ok(PolicyBundle {
            body,
            owner_key,
            signature,
        })
    }

    pub fn from_body(body: &PolicyBody) -> Self {
        Self {
            epoch: Some(body.epoch),
            rules: body
                .rules
                .iter()
                .map(|r| RuleDocument {
                    src_measurement: Some(r.src_measurement.to_hex()),
                    dst: Some(DstDocument {
                        ip: Some(r.dst.address.ip().to_string()),
                        port: Some(r.dst.address.port() as i64),
                        measurement: Some(r.dst.measurement.to_hex()),
                        policy_digest: Some(r.dst.policy_digest.to_hex()),
                    }),
                })
                .collect(),
            owner_pubkey: None,
            signature: None,
        }
    }

    pub fn from_bundle(bundle: &PolicyBundle) -> Self {
        Self {
            owner_pubkey: Some(hex::encode(bundle.owner_key)),
            signature: Some(hex::encode(bundle.signature)),
            ..Self::from_body(&bundle.body)
        }
    }
}

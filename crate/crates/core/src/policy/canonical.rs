//! Canonical byte forms of a policy body.
//!
//! ```text
//! tag_len u32 | tag bytes | epoch u64 | rule_count u32 | rule*
//! rule := rec_len u32 | src_measurement[48] | ipv4 u32 | port u16
//!         | dst_measurement[48] | dst_policy_digest[48]   (signing form only)
//! ```
//!
//! All integers are little-endian; the IPv4 address is its numeric value.
//! Rules are sorted by `(ipv4, port)`. The signing form uses the tag
//! `janus/policy/v1`; the digest form uses `janus/policy-digest/v1` and omits
//! the per-rule peer digest pin.

use super::{FlowRule, PolicyBody};
use crate::ValidationError;

const SIGNING_TAG: &[u8] = b"janus/policy/v1";
const DIGEST_TAG: &[u8] = b"janus/policy-digest/v1";

/// Bytes covered by the owner's signature.
pub fn canonical_bytes(body: &PolicyBody) -> Result<Vec<u8>, ValidationError> {
    encode(body, SIGNING_TAG, true)
}

/// Bytes hashed into the policy digest.
pub fn digest_input_bytes(body: &PolicyBody) -> Result<Vec<u8>, ValidationError> {
    encode(body, DIGEST_TAG, false)
}

fn sort_key(r: &FlowRule) -> (u32, u16) {
    (u32::from(*r.dst.address.ip()), r.dst.address.port())
}

fn encode(body: &PolicyBody, tag: &[u8], with_pin: bool) -> Result<Vec<u8>, ValidationError> {
    body.validate()?;
    let mut rules: Vec<&FlowRule> = body.rules.iter().collect();
    rules.sort_by_key(|r| sort_key(r));

    let rec_len: u32 = if with_pin { 150 } else { 102 };
    let mut out = Vec::with_capacity(4 + tag.len() + 12 + rules.len() * (4 + rec_len as usize));
    out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
    out.extend_from_slice(tag);
    out.extend_from_slice(&body.epoch.to_le_bytes());
    out.extend_from_slice(&(rules.len() as u32).to_le_bytes());
    for r in rules {
        out.extend_from_slice(&rec_len.to_le_bytes());
        out.extend_from_slice(r.src_measurement.as_bytes());
        out.extend_from_slice(&u32::from(*r.dst.address.ip()).to_le_bytes());
        out.extend_from_slice(&r.dst.address.port().to_le_bytes());
        out.extend_from_slice(r.dst.measurement.as_bytes());
        if with_pin {
            out.extend_from_slice(r.dst.policy_digest.as_bytes());
        }
    }
    Ok(out)
}

//! Flight framing.
//!
//! `"MAKE" | version u8 | flight_no u8 | epoch u64le | count u16le |
//! (tag u16le, len u32le, bytes)*`

use super::HandshakeError;

pub const MAGIC: &[u8; 4] = b"MAKE";
pub const VERSION: u8 = 1;
pub const ABORT_FLIGHT: u8 = 255;

pub const TAG_EPHEMERAL_PUBLIC: u16 = 1;
pub const TAG_NONCE: u16 = 2;
pub const TAG_QUOTE: u16 = 3;
pub const TAG_POLICY_DIGEST: u16 = 4;
pub const TAG_CONFIRMATION_MAC: u16 = 5;
pub const TAG_ABORT_REASON: u16 = 6;

/// Upper bound on an encoded flight; quotes are a few hundred bytes.
pub const MAX_FLIGHT_LEN: usize = 16 * 1024;

const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flight {
    pub flight_no: u8,
    pub epoch: u64,
    pub fields: Vec<(u16, Vec<u8>)>,
}

fn malformed(why: impl Into<String>) -> HandshakeError {
    HandshakeError::MalformedFlight(why.into())
}

fn fixed_len(tag: u16) -> Option<usize> {
    match tag {
        TAG_EPHEMERAL_PUBLIC => Some(97),
        TAG_NONCE => Some(32),
        TAG_POLICY_DIGEST | TAG_CONFIRMATION_MAC => Some(48),
        TAG_ABORT_REASON => Some(2),
        TAG_QUOTE => None,
        _ => None,
    }
}

impl Flight {
    pub fn new(flight_no: u8, epoch: u64) -> Self {
        Self {
            flight_no,
            epoch,
            fields: Vec::new(),
        }
    }

    pub fn with(mut self, tag: u16, bytes: &[u8]) -> Self {
        self.fields.push((tag, bytes.to_vec()));
        self
    }

    pub fn abort(epoch: u64, reason: u16) -> Self {
        Self::new(ABORT_FLIGHT, epoch).with(TAG_ABORT_REASON, &reason.to_le_bytes())
    }

    pub fn encode(&self) -> Vec<u8> {
        let body: usize = self.fields.iter().map(|(_, b)| 6 + b.len()).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + body);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.flight_no);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.fields.len() as u16).to_le_bytes());
        for (tag, bytes) in &self.fields {
            out.extend_from_slice(&tag.to_le_bytes());
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(bytes);
        }
        out
    }

    /// Strict decode: known tags only, no duplicates, fixed lengths
    /// enforced, no trailing bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, HandshakeError> {
        if bytes.len() > MAX_FLIGHT_LEN {
            return Err(malformed("flight too large"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(malformed("short header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(malformed("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(malformed(format!("unsupported version {}", bytes[4])));
        }
        let flight_no = bytes[5];
        let epoch = u64::from_le_bytes(bytes[6..14].try_into().expect("sized"));
        let count = u16::from_le_bytes([bytes[14], bytes[15]]) as usize;
        let mut at = HEADER_LEN;
        let mut fields: Vec<(u16, Vec<u8>)> = Vec::with_capacity(count);
        for _ in 0..count {
            if bytes.len() < at + 6 {
                return Err(malformed("truncated field header"));
            }
            let tag = u16::from_le_bytes([bytes[at], bytes[at + 1]]);
            let len = u32::from_le_bytes(bytes[at + 2..at + 6].try_into().expect("sized")) as usize;
            at += 6;
            if !(TAG_EPHEMERAL_PUBLIC..=TAG_ABORT_REASON).contains(&tag) {
                return Err(malformed(format!("unknown tag {tag}")));
            }
            if fields.iter().any(|(t, _)| *t == tag) {
                return Err(malformed(format!("duplicate tag {tag}")));
            }
            if let Some(want) = fixed_len(tag) {
                if len != want {
                    return Err(malformed(format!("tag {tag} has length {len}, expected {want}")));
                }
            }
            if bytes.len() < at + len {
                return Err(malformed("truncated field"));
            }
            fields.push((tag, bytes[at..at + len].to_vec()));
            at += len;
        }
        if at != bytes.len() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Self {
            flight_no,
            epoch,
            fields,
        })
    }

    pub fn field(&self, tag: u16) -> Result<&[u8], HandshakeError> {
        self.fields
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| malformed(format!("missing tag {tag}")))
    }

    pub fn field_array<const N: usize>(&self, tag: u16) -> Result<[u8; N], HandshakeError> {
        self.field(tag)?
            .try_into()
            .map_err(|_| malformed(format!("tag {tag} has wrong length")))
    }

    /// Requires exactly this set of tags.
    pub fn expect_tags(&self, tags: &[u16]) -> Result<(), HandshakeError> {
        if self.fields.len() != tags.len() || tags.iter().any(|t| self.field(*t).is_err()) {
            return Err(malformed(format!(
                "flight {} carries tags {:?}, expected {:?}",
                self.flight_no,
                self.fields.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
                tags
            )));
        }
        Ok(())
    }

    pub fn abort_reason(&self) -> Option<u16> {
        if self.flight_no != ABORT_FLIGHT {
            return None;
        }
        self.field_array::<2>(TAG_ABORT_REASON).ok().map(u16::from_le_bytes)
    }
}

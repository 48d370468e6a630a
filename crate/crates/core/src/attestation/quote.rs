use ed25519_dalek::{Signature, Verifier as _, VerifyingKey};

use super::{AttestationError, REPORT_DATA_LEN};
use crate::{Digest48, ValidationError};

pub const QUOTE_MAGIC: &[u8; 4] = b"JQT1";
const SIGNED_LEN: usize = 4 + 48 + 4 * 48 + REPORT_DATA_LEN + 8;
pub const QUOTE_LEN: usize = SIGNED_LEN + 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TdReport {
    pub measurement: Digest48,
    pub rtmr: [Digest48; 4],
    pub report_data: [u8; REPORT_DATA_LEN],
}

/// A report signed by the attestation authority via a quoting enclave.
///
/// Wire form: `"JQT1" | measurement | rtmr0..3 | report_data |
/// collateral_id u64le | ed25519 signature`, with the signature covering
/// every preceding byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttestationQuote {
    pub report: TdReport,
    pub collateral_id: u64,
    pub signature: [u8; 64],
}

impl TdReport {
    pub(crate) fn signed_bytes(&self, collateral_id: u64) -> [u8; SIGNED_LEN] {
        let mut out = [0u8; SIGNED_LEN];
        let mut at = 0;
        let mut put = |b: &[u8]| {
            out[at..at + b.len()].copy_from_slice(b);
            at += b.len();
        };
        put(QUOTE_MAGIC);
        put(self.measurement.as_bytes());
        for r in &self.rtmr {
            put(r.as_bytes());
        }
        put(&self.report_data);
        put(&collateral_id.to_le_bytes());
        out
    }
}

impl AttestationQuote {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(QUOTE_LEN);
        out.extend_from_slice(&self.report.signed_bytes(self.collateral_id));
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ValidationError> {
        if bytes.len() != QUOTE_LEN {
            return Err(ValidationError::new("quote", format!("expected {QUOTE_LEN} bytes, got {}", bytes.len())));
        }
        if &bytes[..4] != QUOTE_MAGIC {
            return Err(ValidationError::new("quote", "bad magic"));
        }
        let d = |i: usize| Digest48::from_slice("quote", &bytes[i..i + 48]).expect("sized");
        let measurement = d(4);
        let rtmr = [d(52), d(100), d(148), d(196)];
        let mut report_data = [0u8; REPORT_DATA_LEN];
        report_data.copy_from_slice(&bytes[244..308]);
        let collateral_id = u64::from_le_bytes(bytes[308..316].try_into().expect("sized"));
        let mut signature = [0u8; 64];
        signature.copy_from_slice(&bytes[316..]);
        Ok(Self {
            report: TdReport {
                measurement,
                rtmr,
                report_data,
            },
            collateral_id,
            signature,
        })
    }

    pub fn verify_signature(&self, key: &VerifyingKey) -> Result<(), AttestationError> {
        key.verify(
            &self.report.signed_bytes(self.collateral_id),
            &Signature::from_bytes(&self.signature),
        )
        .map_err(|_| AttestationError::SignatureInvalid)
    }
}

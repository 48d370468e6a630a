//! Simulated TEE attestation: measurement registers, reports, quotes signed
//! by a per-host quoting enclave, and a collateral authority with
//! revocation and freshness.

mod authority;
mod qe;
mod quote;
mod registers;

pub use authority::{Authority, CollateralSnapshot, Verifier, DEFAULT_MAX_AGE_MS, DEFAULT_POLL_INTERVAL_MS};
pub use qe::{QeMode, QuotingEnclave, SignedQuote};
pub use quote::{AttestationQuote, TdReport, QUOTE_LEN, QUOTE_MAGIC};
pub use registers::{
    bind_report_data, generate_report, BootSequence, MeasurementRegisters, BPF_LOCK_MARKER,
    PROXY_RTMR, REPORT_DATA_LEN,
};

use ed25519_dalek::VerifyingKey;

use crate::Digest48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, thiserror::Error)]
pub enum AttestationError {
    #[error("quote signature invalid")]
    SignatureInvalid,
    #[error("measurement not authorized")]
    MeasurementMismatch,
    #[error("RTMR3 does not match the pinned value")]
    Rtmr3Mismatch,
    #[error("measurement revoked")]
    Revoked,
    #[error("collateral stale")]
    CollateralStale,
    #[error("collateral refresh failed")]
    RefreshFailed,
    #[error("registers not sealed")]
    NotSealed,
}

impl AttestationError {
    pub fn code(self) -> &'static str {
        match self {
            AttestationError::SignatureInvalid => "signature_invalid",
            AttestationError::MeasurementMismatch => "measurement_mismatch",
            AttestationError::Rtmr3Mismatch => "rtmr3_mismatch",
            AttestationError::Revoked => "revoked",
            AttestationError::CollateralStale => "collateral_stale",
            AttestationError::RefreshFailed => "refresh_failed",
            AttestationError::NotSealed => "not_sealed",
        }
    }
}

/// What the verifier expects of a peer's quote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuoteExpectation {
    pub measurement: Digest48,
    pub rtmr3: Digest48,
}

/// The attested facts of a quote that passed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifiedIdentity {
    pub measurement: Digest48,
    pub rtmr: [Digest48; 4],
    pub report_data: [u8; REPORT_DATA_LEN],
    pub collateral_id: u64,
}

/// Checks `quote` in the order: signature, measurement, RTMR3, revocation,
/// freshness. Report-data binding is left to the caller.
pub fn verify_quote(
    quote: &AttestationQuote,
    expected: &QuoteExpectation,
    authority_key: &VerifyingKey,
    collateral: &CollateralSnapshot,
    now_ms: u64,
) -> Result<VerifiedIdentity, AttestationError> {
    quote.verify_signature(authority_key)?;
    let report = &quote.report;
    if report.measurement != expected.measurement {
        return Err(AttestationError::MeasurementMismatch);
    }
    if report.rtmr[3] != expected.rtmr3 {
        return Err(AttestationError::Rtmr3Mismatch);
    }
    if collateral.revoked.contains(&report.measurement) {
        return Err(AttestationError::Revoked);
    }
    if !collateral.is_fresh(now_ms) {
        return Err(AttestationError::CollateralStale);
    }
    Ok(VerifiedIdentity {
        measurement: report.measurement,
        rtmr: report.rtmr,
        report_data: report.report_data,
        collateral_id: quote.collateral_id,
    })
}

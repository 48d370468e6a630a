use sha2::{Digest as _, Sha384};

use super::quote::TdReport;
use crate::{Digest48, ValidationError};

pub const REPORT_DATA_LEN: usize = 64;

/// Register that receives the proxy measurement and the lock marker.
pub const PROXY_RTMR: usize = 3;

/// Measured event for the BPF lock transition.
pub const BPF_LOCK_MARKER: &[u8] = b"janus/bpf-lock/v1";

/// RTMR0..3. Extend-only; the fields are not writable from outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementRegisters {
    rtmr: [Digest48; 4],
    bpf_lock_engaged: bool,
}

impl Default for MeasurementRegisters {
    fn default() -> Self {
        Self::new()
    }
}

impl MeasurementRegisters {
    pub fn new() -> Self {
        Self {
            rtmr: [Digest48::ZERO; 4],
            bpf_lock_engaged: false,
        }
    }

    pub fn rtmr(&self, index: usize) -> Digest48 {
        self.rtmr[index]
    }

    pub fn snapshot(&self) -> [Digest48; 4] {
        self.rtmr
    }

    pub fn bpf_lock_engaged(&self) -> bool {
        self.bpf_lock_engaged
    }

    /// `rtmr[index] = SHA-384(rtmr[index] || digest)`.
    pub fn extend(&mut self, index: usize, digest: &[u8]) -> Result<(), ValidationError> {
        if index > 3 {
            return Err(ValidationError::new("index", "RTMR index must be 0..=3"));
        }
        let d = Digest48::from_slice("digest", digest)?;
        self.rtmr[index] = Digest48::hash_parts([&self.rtmr[index].0[..], &d.0[..]]);
        Ok(())
    }

    /// Engages the lock once; later calls are no-ops.
    pub fn engage_bpf_lock(&mut self) {
        if self.bpf_lock_engaged {
            return;
        }
        self.extend(PROXY_RTMR, Digest48::hash(BPF_LOCK_MARKER).as_bytes())
            .expect("fixed-size marker");
        self.bpf_lock_engaged = true;
    }

    /// RTMR3 a correctly booted node reaches for a given proxy digest.
    pub fn reference_rtmr3(proxy: &Digest48) -> Digest48 {
        let mut boot = BootSequence::new();
        boot.load_proxy_measurement(proxy);
        boot.engage_bpf_lock();
        boot.seal().rtmr(PROXY_RTMR)
    }
}

/// Ordered boot: optional boot-chain events, then the proxy measurement,
/// then the lock, then seal.
#[derive(Debug, Default)]
pub struct BootSequence {
    regs: MeasurementRegisters,
}

impl BootSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Firmware, kernel and similar events into RTMR0..2.
    pub fn measure_boot_chain(&mut self, index: usize, event: &[u8]) -> Result<(), ValidationError> {
        if index >= PROXY_RTMR {
            return Err(ValidationError::new("index", "boot chain uses RTMR0..=2"));
        }
        self.regs.extend(index, Digest48::hash(event).as_bytes())
    }

    pub fn load_proxy_measurement(&mut self, proxy: &Digest48) {
        self.regs
            .extend(PROXY_RTMR, proxy.as_bytes())
            .expect("fixed-size digest");
    }

    pub fn engage_bpf_lock(&mut self) {
        self.regs.engage_bpf_lock();
    }

    /// Registers as they stand now, without sealing.
    pub fn peek(&self) -> &MeasurementRegisters {
        &self.regs
    }

    pub fn seal(self) -> MeasurementRegisters {
        self.regs
    }
}

/// SHA-384 over `len_le32(item) || item` for each item, right-padded with
/// 16 zero bytes.
pub fn bind_report_data(items: &[&[u8]]) -> [u8; REPORT_DATA_LEN] {
    let mut h = Sha384::new();
    for item in items {
        h.update((item.len() as u32).to_le_bytes());
        h.update(item);
    }
    let mut out = [0u8; REPORT_DATA_LEN];
    out[..48].copy_from_slice(&h.finalize());
    out
}

pub fn generate_report(
    regs: &MeasurementRegisters,
    measurement: Digest48,
    report_data: &[u8],
) -> Result<TdReport, ValidationError> {
    let report_data: [u8; REPORT_DATA_LEN] = report_data
        .try_into()
        .map_err(|_| ValidationError::new("report_data", format!("expected 64 bytes, got {}", report_data.len())))?;
    Ok(TdReport {
        measurement,
        rtmr: regs.snapshot(),
        report_data,
    })
}

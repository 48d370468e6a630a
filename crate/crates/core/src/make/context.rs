use std::sync::Arc;

use parking_lot::Mutex;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::attestation::{
    generate_report, AttestationError, AttestationQuote, MeasurementRegisters, QuotingEnclave,
    Verifier, REPORT_DATA_LEN,
};
use crate::clock::Clock;
use crate::Digest48;

pub trait SecureRng: RngCore + CryptoRng + Send {}
impl<T: RngCore + CryptoRng + Send> SecureRng for T {}

#[derive(Debug, Clone, Copy)]
pub struct HandshakeConfig {
    /// Time allowed from sending a flight to receiving the next one.
    pub deadline_ms: u64,
}

impl Default for HandshakeConfig {
    fn default() -> Self {
        Self { deadline_ms: 2_000 }
    }
}

/// Everything a node needs to attest itself and verify peers.
pub struct AttestationContext {
    measurement: Digest48,
    registers: MeasurementRegisters,
    sealed: bool,
    /// RTMR3 every peer must present: the deployment's pinned proxy state.
    expected_rtmr3: Digest48,
    qe: Arc<QuotingEnclave>,
    verifier: Arc<Verifier>,
    clock: Arc<dyn Clock>,
    rng: Mutex<Box<dyn SecureRng>>,
}

impl AttestationContext {
    pub fn new(
        measurement: Digest48,
        registers: MeasurementRegisters,
        expected_rtmr3: Digest48,
        qe: Arc<QuotingEnclave>,
        verifier: Arc<Verifier>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            measurement,
            registers,
            sealed: true,
            expected_rtmr3,
            qe,
            verifier,
            clock,
            rng: Mutex::new(Box::new(rand::rngs::OsRng)),
        }
    }

    /// A context whose registers have not been sealed: it can produce
    /// reports but may not take part in handshakes.
    pub fn unsealed(mut self) -> Self {
        self.sealed = false;
        self
    }

    /// Replaces the OS generator with a seeded one, for reproducible runs.
    pub fn with_seed(self, seed: u64) -> Self {
        *self.rng.lock() = Box::new(ChaCha20Rng::seed_from_u64(seed));
        self
    }

    pub fn measurement(&self) -> Digest48 {
        self.measurement
    }

    pub fn registers(&self) -> &MeasurementRegisters {
        &self.registers
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn expected_rtmr3(&self) -> Digest48 {
        self.expected_rtmr3
    }

    pub fn verifier(&self) -> &Verifier {
        &self.verifier
    }

    pub fn clock(&self) -> &dyn Clock {
        &*self.clock
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub(crate) fn fill_random(&self, out: &mut [u8]) {
        self.rng.lock().fill_bytes(out);
    }

    pub(crate) fn secret_key(&self) -> p384::SecretKey {
        p384::SecretKey::random(&mut *self.rng.lock())
    }

    pub(crate) fn quote(
        &self,
        report_data: &[u8; REPORT_DATA_LEN],
    ) -> Result<(AttestationQuote, f64), AttestationError> {
        if !self.sealed {
            return Err(AttestationError::NotSealed);
        }
        let report = generate_report(&self.registers, self.measurement, report_data)
            .expect("fixed-size report data");
        let signed = self.qe.sign_quote(&report, self.clock.now_ms() as f64);
        Ok((signed.quote, signed.latency_ms))
    }
}

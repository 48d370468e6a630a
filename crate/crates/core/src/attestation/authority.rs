use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{verify_quote, AttestationError, AttestationQuote, QuoteExpectation, TdReport, VerifiedIdentity};
use crate::clock::Clock;
use crate::{Digest48, ValidationError};

pub const DEFAULT_MAX_AGE_MS: u64 = 90_000;
pub const DEFAULT_POLL_INTERVAL_MS: u64 = 60_000;

/// TCB and revocation state as of `issued_at_ms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollateralSnapshot {
    pub snapshot_id: u64,
    pub issued_at_ms: u64,
    pub revoked: BTreeSet<Digest48>,
    pub max_age_ms: u64,
}

impl CollateralSnapshot {
    pub fn is_fresh(&self, now_ms: u64) -> bool {
        now_ms.saturating_sub(self.issued_at_ms) <= self.max_age_ms
    }

    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(text).map_err(|e| ValidationError::new("collateral", e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("collateral serializes")
    }
}

struct AuthorityState {
    next_id: u64,
    current_id: u64,
    revoked: BTreeSet<Digest48>,
}

/// The root of trust: holds the quote-signing key and publishes collateral.
pub struct Authority {
    key: SigningKey,
    max_age_ms: u64,
    available: AtomicBool,
    state: Mutex<AuthorityState>,
}

impl Authority {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            key: SigningKey::from_bytes(&seed),
            max_age_ms: DEFAULT_MAX_AGE_MS,
            available: AtomicBool::new(true),
            state: Mutex::new(AuthorityState {
                next_id: 1,
                current_id: 0,
                revoked: BTreeSet::new(),
            }),
        }
    }

    pub fn with_max_age(mut self, max_age_ms: u64) -> Self {
        self.max_age_ms = max_age_ms;
        self
    }

    pub fn seed(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    /// Takes effect in the next published snapshot.
    pub fn revoke(&self, measurement: Digest48) {
        self.state.lock().revoked.insert(measurement);
    }

    pub fn revoked(&self) -> BTreeSet<Digest48> {
        self.state.lock().revoked.clone()
    }

    /// Simulates collateral-service outages.
    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    pub fn refresh_collateral(&self, clock: &dyn Clock) -> Result<CollateralSnapshot, AttestationError> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(AttestationError::RefreshFailed);
        }
        let mut st = self.state.lock();
        let id = st.next_id;
        st.next_id += 1;
        st.current_id = id;
        Ok(CollateralSnapshot {
            snapshot_id: id,
            issued_at_ms: clock.now_ms(),
            revoked: st.revoked.clone(),
            max_age_ms: self.max_age_ms,
        })
    }

    pub(crate) fn sign(&self, report: &TdReport) -> AttestationQuote {
        let collateral_id = self.state.lock().current_id;
        let signature = self.key.sign(&report.signed_bytes(collateral_id)).to_bytes();
        AttestationQuote {
            report: *report,
            collateral_id,
            signature,
        }
    }
}

/// A node's quote verifier with its cached collateral, refreshed lazily
/// once per poll interval.
pub struct Verifier {
    authority: Arc<Authority>,
    key: VerifyingKey,
    poll_interval_ms: u64,
    cache: Mutex<(CollateralSnapshot, u64)>,
}

impl Verifier {
    pub fn new(authority: Arc<Authority>, poll_interval_ms: u64, clock: &dyn Clock) -> Result<Self, AttestationError> {
        let snap = authority.refresh_collateral(clock)?;
        let polled = clock.now_ms();
        Ok(Self {
            key: authority.verifying_key(),
            authority,
            poll_interval_ms,
            cache: Mutex::new((snap, polled)),
        })
    }

    pub fn authority_key(&self) -> VerifyingKey {
        self.key
    }

    pub fn snapshot(&self) -> CollateralSnapshot {
        self.cache.lock().0.clone()
    }

    /// Polls if due. A failed refresh keeps the old snapshot, which will
    /// eventually go stale.
    pub fn poll(&self, clock: &dyn Clock) -> Result<(), AttestationError> {
        let now = clock.now_ms();
        let mut cache = self.cache.lock();
        if now.saturating_sub(cache.1) < self.poll_interval_ms {
            return Ok(());
        }
        cache.1 = now;
        match self.authority.refresh_collateral(clock) {
            Ok(s) => {
                cache.0 = s;
                Ok(())
            }
            Err(e) => {
                log::warn!("collateral refresh failed; keeping snapshot {}", cache.0.snapshot_id);
                Err(e)
            }
        }
    }

    pub fn verify(
        &self,
        quote: &AttestationQuote,
        expected: &QuoteExpectation,
        clock: &dyn Clock,
    ) -> Result<VerifiedIdentity, AttestationError> {
        let _ = self.poll(clock);
        let cache = self.cache.lock();
        verify_quote(quote, expected, &self.key, &cache.0, clock.now_ms())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;

    #[test]
    fn snapshot_ids_increase() {
        let clock = SimClock::new(0);
        let a = Authority::from_seed([0u8; 32]);
        let s1 = a.refresh_collateral(&clock).unwrap();
        let s2 = a.refresh_collateral(&clock).unwrap();
        assert!(s2.snapshot_id > s1.snapshot_id);
    }

    #[test]
    fn unavailable_refresh_keeps_old_snapshot_until_stale() {
        let clock = SimClock::new(0);
        let a = Arc::new(Authority::from_seed([0u8; 32]));
        let v = Verifier::new(a.clone(), DEFAULT_POLL_INTERVAL_MS, &clock).unwrap();
        let first = v.snapshot();
        a.set_available(false);
        clock.set(60_000);
        assert_eq!(v.poll(&clock), Err(AttestationError::RefreshFailed));
        assert_eq!(v.snapshot(), first);
        assert!(first.is_fresh(90_000));
        assert!(!first.is_fresh(90_001));
    }

    #[test]
    fn collateral_json_round_trip() {
        let clock = SimClock::new(42);
        let a = Authority::from_seed([0u8; 32]);
        a.revoke(Digest48::hash(b"bad"));
        let s = a.refresh_collateral(&clock).unwrap();
        let text = s.to_json_pretty();
        assert!(text.contains("issued_at_ms"));
        assert_eq!(CollateralSnapshot::from_json(&text).unwrap(), s);
    }
}
